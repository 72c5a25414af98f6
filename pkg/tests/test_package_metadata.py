import configparser
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]


def test_declared_license_files_ship_with_the_source():
    setup = configparser.ConfigParser()
    setup.read(ROOT / "setup.cfg", encoding="utf-8")
    license_name = setup["metadata"]["license"]
    for name in setup["metadata"]["license_files"].split():
        text = (ROOT / name).read_text(encoding="utf-8")
        assert text.startswith(f"{license_name} License")
    assert f'license = "{license_name}"' in (ROOT / "pyproject.toml").read_text(encoding="utf-8")
