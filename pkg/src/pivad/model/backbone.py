import logging
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from pivad.autograd import Tensor, no_grad
from pivad.data.dataset import VideoRecord
from pivad.entities.entities import BackboneConfig
from pivad.exceptions import ModalityError
from pivad.nn import LinearLayer, Module, TransformerBlock

logger = logging.getLogger(__name__)

# (block index counted from 1, block output) -> input of the next block
BlockHook = Callable[[int, Tensor], Tensor]


class Backbone(Module):
    """
    RGB snippet scorer: embedding ``D -> H``, ``B`` transformer blocks, 1-logit head.

    Used both as the frozen teacher and as the student that the inductor
    sites are wired into through ``hook``.
    """

    def __init__(self, config: BackboneConfig):
        super().__init__()
        self.config = config
        self.embed = self.add_child("embed", LinearLayer(config.input_dim, config.hidden_dim))
        self.blocks: List[TransformerBlock] = [
            self.add_child(f"blocks.{i}", TransformerBlock(config.hidden_dim, config.heads, config.ffn_expansion))
            for i in range(config.num_blocks)
        ]
        self.head = self.add_child("head", LinearLayer(config.hidden_dim, 1))

    def run(self, rgb: Tensor, hook: Optional[BlockHook] = None) -> Tuple[Tensor, List[Tensor]]:
        """
        Run the block stack.

        Args:
            rgb: ``T x D`` snippet features
            hook: Called after every block; its return value feeds the next block

        Returns:
            Tuple[Tensor, List[Tensor]]: Logits ``[T]`` and the raw output of every block
        """
        hidden = self.embed(rgb)
        outputs: List[Tensor] = []
        for index, block in enumerate(self.blocks, start=1):
            hidden = block(hidden)
            outputs.append(hidden)
            if hook is not None:
                hidden = hook(index, hidden)
        logits = self.head(hidden).reshape(rgb.shape[0])
        return logits, outputs

    def __call__(self, rgb: Tensor) -> Tensor:
        return self.run(rgb)[0]

    def site_features(self, rgb: Tensor, sites: Dict[str, int]) -> Dict[str, Tensor]:
        _, outputs = self.run(rgb)
        return {name: outputs[index - 1] for name, index in sites.items()}

    def score_video(self, video: VideoRecord) -> np.ndarray:
        """Snippet scores in [0, 1] from RGB alone."""
        if video.rgb is None:
            raise ModalityError(f"video '{video.video_id}': RGB stream missing")
        with no_grad():
            return self(Tensor(video.rgb)).sigmoid().numpy()
