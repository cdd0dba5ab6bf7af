import os
import json
import logging
from typing import Dict, Optional
from pathlib import Path

logger = logging.getLogger(__name__)


class ConfigManager:
    """Layered experiment settings: session > config file > environment"""

    ENV_PREFIX = "CONELAB_"

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = Path(config_file) if config_file else None
        self.session_config: Dict[str, str] = {}
        self.file_config: Dict[str, str] = {}
        self.load_config()

    def load_config(self):
        """Load the key=value (or JSON) settings file if one was given"""
        self.file_config = {}
        if self.config_file is None:
            return
        if not self.config_file.exists():
            raise FileNotFoundError(f"config file not found: {self.config_file}")

        text = self.config_file.read_text(encoding="utf-8")
        if self.config_file.suffix == ".json":
            self.file_config = {k.upper(): str(v) for k, v in json.loads(text).items()}
            return

        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{self.config_file}:{lineno}: expected key=value, got {raw!r}")
            key, value = line.split("=", 1)
            self.file_config[key.strip().upper()] = value.strip()
        logger.debug("loaded %d settings from %s", len(self.file_config), self.config_file)

    def save_config(self, path: str):
        """Write the merged session and file settings as JSON"""
        merged = {**self.file_config, **self.session_config}
        with open(path, "w", encoding="utf-8") as f:
            json.dump(merged, f, indent=2, sort_keys=True)

    def get_setting(self, key: str) -> Optional[str]:
        """Look a setting up (session > file > environment)"""
        key = key.upper()

        # 1. command-line overrides
        if key in self.session_config:
            return self.session_config[key]

        # 2. config file
        if key in self.file_config:
            return self.file_config[key]

        # 3. environment
        return os.getenv(f"{self.ENV_PREFIX}{key}")

    def set_setting(self, key: str, value: str):
        self.session_config[key.upper()] = str(value)

    def clear_session(self):
        self.session_config = {}

    def export_config(self) -> str:
        """Render the effective settings as an env file"""
        merged = {**self.file_config, **self.session_config}
        return "\n".join(f"{self.ENV_PREFIX}{k}={v}" for k, v in sorted(merged.items()) if v != "")


def coerce_value(raw: str):
    """Turn a command-line string into bool, int, float, list or str"""
    text = raw.strip()
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if "," in text:
        return [coerce_value(part) for part in text.split(",") if part.strip()]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


# global settings manager
config_manager = ConfigManager()
