import logging
import time
from typing import Any, Callable, Dict, List, Optional

from .entities import RunnerEvent, RunnerStatus

logger = logging.getLogger(__name__)

Listener = Callable[[RunnerEvent], None]


class PivadBaseRunner:
    """
    Base class for anything that drives a long computation and reports on it:
    the trainer, the evaluator and the ablation harness.

    ✅ Identity: every runner has an ``rid`` carried as ``source`` on its events.
    ✅ Lifecycle: ``status`` moves through RunnerStatus and every transition is
       emitted as a ``status_changed`` event.
    ✅ Events: listeners subscribe per event type (``on``) or to everything
       (``on_any``). Loss logs, progress reporting and tests hook in here instead
       of the runner writing files itself.

    Event payloads are plain dicts; the runner never inspects what listeners do
    with them.
    """

    def __init__(self, rid: Optional[str] = None, status: RunnerStatus = RunnerStatus.INITIATED):
        """IDENTITY"""
        self.rid: str = rid if rid is not None else f"runner_{id(self):x}"

        """ LIFECYCLE """
        self.status: RunnerStatus = status

        """ EVENTS """
        # Local listeners react to one event type
        self._local_listeners: Dict[str, List[Listener]] = {}
        # Global listeners receive every event
        self._global_listeners: List[Listener] = []

    ## Event system ##
    def emit(self, event_type: str, data: Optional[Dict[str, Any]] = None) -> None:
        """
        Emit an event to all subscribed listeners.

        Args:
            event_type: The type of event being emitted
            data: Optional data payload for the event
        """
        if data is None:
            data = {}

        event: RunnerEvent = {
            "type": event_type,
            "source": self.rid,
            "timestamp": time.time(),
            "data": data,
        }

        for listener in self._local_listeners.get(event_type, []):
            listener(event)

        for listener in self._global_listeners:
            listener(event)

    def on(self, event_type: str, callback: Listener) -> None:
        """
        Register a listener for a specific event type.

        Args:
            event_type: The type of event to listen for
            callback: Function to call when the event occurs
        """
        self._local_listeners.setdefault(event_type, []).append(callback)

    def off(self, event_type: str, callback: Listener) -> None:
        """
        Remove a listener for a specific event type.

        Args:
            event_type: The type of event
            callback: The callback function to remove
        """
        listeners = self._local_listeners.get(event_type, [])
        if callback in listeners:
            listeners.remove(callback)

    def on_any(self, callback: Listener) -> None:
        """Register a listener for all event types."""
        self._global_listeners.append(callback)

    def off_any(self, callback: Listener) -> None:
        """Remove a listener for all event types."""
        if callback in self._global_listeners:
            self._global_listeners.remove(callback)

    ## Lifecycle ##
    def set_status(self, status: RunnerStatus, **details: Any) -> None:
        """
        Move the runner to ``status`` and emit ``status_changed``.

        Args:
            status: New lifecycle status
            **details: Extra payload merged into the event (e.g. the stage name)
        """
        previous_status = self.status
        self.status = status
        logger.debug("%s: %s -> %s %s", self.rid, previous_status.value, status.value, details or "")
        self.emit(
            "status_changed",
            {"previous_status": previous_status, "current_status": status, **details},
        )
