"""
User defaults for the command-line tools, kept in an INI file.

Two things are remembered:

* default values of command-line options, one INI group per subcommand
  (``speed``, ``train``, ``plan``, ``bench``)
* the checkpoints most recently written or loaded

The file lives under the user's config directory unless ``--settings PATH``
names one. Deleting it forgets everything. Precedence when resolving an
option: command line, then this file, then the constants in :mod:`EikoPlan`.

Backed by ``PyQt5.QtCore.QSettings`` in INI format.

.. autosummary::

    ~ApplicationQSettings
    ~get_settings
"""

import datetime
import logging

from PyQt5 import QtCore

from . import __package_name__, __settings_orgName__

logger = logging.getLogger(__name__)

GLOBAL_GROUP = "___global___"
GROUPS = ("speed", "train", "plan", "bench")
MAX_RECENT = 10
RECENT_KEY = "recent/checkpoints"
SETTINGS_VERSION = 1.0


def _now():
    return str(datetime.datetime.now())


class ApplicationQSettings(QtCore.QSettings):
    """
    EikoPlan's INI settings file.

    Keys are written ``group/name``; a bare ``name`` lives in
    :data:`GLOBAL_GROUP`, which also holds the file's own path, the
    settings version and the time of the last change.

    .. autosummary::

        ~to_dict
        ~init_global_keys
        ~_keySplit_
        ~keyExists
        ~getKey
        ~setKey
        ~resetDefaults
        ~updateTimeStamp
        ~defaults
        ~getRecentCheckpoints
        ~addRecentCheckpoint
        ~clearRecentCheckpoints
    """

    def __init__(self, orgName=__settings_orgName__, appName=__package_name__, path=None):
        fmt = QtCore.QSettings.IniFormat
        if path is not None:
            super().__init__(str(path), fmt)
        else:
            super().__init__(fmt, QtCore.QSettings.UserScope, orgName, appName)
        self.init_global_keys()

    def __repr__(self):
        return f"{type(self).__name__}(fileName={self.fileName()!r}, keys={len(self.allKeys())})"

    def to_dict(self):
        """All settings as ``{"group/name": value}``."""
        return {key: self.value(key) for key in self.allKeys()}

    def init_global_keys(self):
        """Fill in the global keys that are missing; existing values are kept."""
        initial = {
            "this_file": self.fileName(),
            "version": SETTINGS_VERSION,
            "timestamp": _now(),
        }
        for name, value in initial.items():
            key = f"{GLOBAL_GROUP}/{name}"
            if not self.keyExists(key) or self.value(key) in ("", None):
                self.setValue(key, value)

    def _keySplit_(self, full_key):
        """
        Return ``(group, name)`` for ``"name"`` or ``"group/name"``.

        Raises KeyError for an empty key or more than one separator.
        """
        if not full_key:
            raise KeyError("empty settings key")
        group, sep, name = str(full_key).rpartition("/")
        if "/" in group:
            raise KeyError(f"settings keys take at most one '/': {full_key!r}")
        return (group, name) if sep else (GLOBAL_GROUP, name)

    def keyExists(self, key):
        """True when ``key`` (full ``group/name`` form) is stored."""
        return key in self.allKeys()

    def getKey(self, key):
        """Value of ``key``, or None. Bare names are looked up in the global group."""
        group, name = self._keySplit_(key)
        return self.value(f"{group}/{name}")

    def setKey(self, key, value):
        """Store ``value`` under ``key`` and stamp the change time."""
        group, name = self._keySplit_(key)
        self.setValue(f"{group}/{name}", value)
        if name != "timestamp":
            self.updateTimeStamp()

    def resetDefaults(self):
        """Forget every stored option and recent checkpoint."""
        self.clear()
        self.init_global_keys()

    def updateTimeStamp(self):
        self.setValue(f"{GLOBAL_GROUP}/timestamp", _now())

    def defaults(self, group):
        """
        Stored option defaults of one group.

        INI storage returns strings; callers convert to the option's type.

        :param str group: one of ``speed``, ``train``, ``plan``, ``bench``
        """
        if group not in GROUPS:
            raise KeyError(f"unknown settings group {group!r}")
        self.beginGroup(group)
        try:
            return {k: self.value(k) for k in self.childKeys()}
        finally:
            self.endGroup()

    def getRecentCheckpoints(self):
        """Get list of recently used checkpoints, newest first."""
        recent = self.getKey(RECENT_KEY)
        return recent.split("|") if recent else []

    def addRecentCheckpoint(self, path):
        """Add checkpoint to recent list (max 10 entries)."""
        entry = str(path)
        recent = self.getRecentCheckpoints()
        if entry in recent:
            recent.remove(entry)
        recent.insert(0, entry)
        self.setKey(RECENT_KEY, "|".join(recent[:MAX_RECENT]))

    def clearRecentCheckpoints(self):
        """Forget all recent checkpoints."""
        self.setKey(RECENT_KEY, "")


_settings = {}


def get_settings(path=None):
    """
    Return the settings object for ``path`` (user file when None).

    Objects are created on first use and reused afterwards.
    """
    key = None if path is None else str(path)
    if key not in _settings:
        _settings[key] = ApplicationQSettings(path=path)
        logger.debug("settings file: %s", _settings[key].fileName())
    return _settings[key]
