import os
from pathlib import Path

import yaml

package_name = "larsen"

DEFAULT_CONFIG = {"jobs": 1, "logs": [], "profile": "default"}


class ConfigManager:
    """
    A class for managing user-level configuration settings of the package.

    Attributes
    ----------
    config : dict
        A dictionary containing the current configuration settings.
    folder_path : Path
        A Path object representing the folder where the configuration file is stored
        (``~/.larsen`` unless the ``LARSEN_HOME`` environment variable is set).
    config_file : Path
        A Path object representing the configuration file.
    logs : list
        A list of log files every console message is appended to.

    Methods
    -------
    check_config_file(load=False)
        Checks if the configuration file exists and loads it if it does.
    save()
        Saves the current configuration settings to the configuration file.
    get(key)
        Returns the value of the specified configuration setting.
    """

    def __init__(self, folder_path=None):
        self.config = dict(DEFAULT_CONFIG)

        if folder_path is None:
            folder_path = os.environ.get(
                f"{package_name.upper()}_HOME", Path.home() / f".{package_name}"
            )
        self.folder_path = Path(folder_path)
        self.config_file = self.folder_path / "config"
        self.writable = True

        try:
            self.folder_path.mkdir(parents=True, exist_ok=True)
        except OSError:
            # read-only home, settings stay in memory
            self.writable = False

        self.check_config_file(load=True)
        self.logs = list(self.config.get("logs") or [])

    def check_config_file(self, load=False):
        if self.config_file.exists():
            with self.config_file.open(mode="r") as file:
                if load:
                    loaded = yaml.safe_load(file.read()) or {}
                    self.config = {**DEFAULT_CONFIG, **loaded}
        elif self.writable:
            try:
                with self.config_file.open(mode="w") as file:
                    yaml.dump(self.config, file, default_flow_style=False)
            except OSError:
                self.writable = False

    def save(self):
        if not self.writable:
            return
        self.config["logs"] = list(self.logs)
        with self.config_file.open(mode="w") as file:
            yaml.dump(self.config, file, default_flow_style=False)

    def get(self, key, default=None):
        return self.config.get(key, default)

    def set(self, key, value):
        self.config[key] = value
        if key == "logs":
            self.logs = list(value)
        self.save()
