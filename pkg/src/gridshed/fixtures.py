"""Paths to the bundled WECC 9-bus fixture files."""

from pathlib import Path

_DATA = Path(__file__).with_name("data")


def wecc9_system_path() -> Path:
    """System file for the classic three-machine WECC 9-bus test system."""
    return _DATA / "wecc9.toml"


def wecc9_charfun_path() -> Path:
    """Characteristic-function file for the WECC 9-bus sheddable loads."""
    return _DATA / "wecc9_charfun.txt"
