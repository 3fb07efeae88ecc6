"""Tests for the INI settings file and option resolution."""

import argparse

import pytest

from EikoPlan.app import Options
from EikoPlan.user_settings import GLOBAL_GROUP, MAX_RECENT, ApplicationQSettings, get_settings


@pytest.fixture
def settings(tmp_path):
    return ApplicationQSettings(path=tmp_path / "EikoPlan.ini")


def test_global_keys(settings, tmp_path):
    assert settings.keyExists(f"{GLOBAL_GROUP}/version")
    assert settings.keyExists(f"{GLOBAL_GROUP}/timestamp")
    assert settings.getKey("this_file") == str(tmp_path / "EikoPlan.ini")


def test_key_split(settings):
    assert settings._keySplit_("eta") == (GLOBAL_GROUP, "eta")
    assert settings._keySplit_("plan/eta") == ("plan", "eta")
    with pytest.raises(KeyError):
        settings._keySplit_("a/b/c")
    with pytest.raises(KeyError):
        settings._keySplit_("")


def test_group_defaults(settings):
    settings.setKey("train/epochs", "5")
    settings.setKey("train/regularizer", "viscosity")
    assert settings.defaults("train") == {"epochs": "5", "regularizer": "viscosity"}
    assert settings.defaults("bench") == {}
    with pytest.raises(KeyError):
        settings.defaults("network")


def test_recent_checkpoints(settings, tmp_path):
    assert settings.getRecentCheckpoints() == []
    for i in range(MAX_RECENT + 2):
        settings.addRecentCheckpoint(tmp_path / f"model{i}.pt")
    recent = settings.getRecentCheckpoints()
    assert len(recent) == MAX_RECENT
    assert recent[0] == str(tmp_path / f"model{MAX_RECENT + 1}.pt")
    settings.addRecentCheckpoint(tmp_path / "model5.pt")
    assert settings.getRecentCheckpoints()[0] == str(tmp_path / "model5.pt")
    assert len(settings.getRecentCheckpoints()) == MAX_RECENT
    settings.sync()
    reopened = ApplicationQSettings(path=tmp_path / "EikoPlan.ini")
    assert reopened.getRecentCheckpoints() == settings.getRecentCheckpoints()
    settings.clearRecentCheckpoints()
    assert settings.getRecentCheckpoints() == []


def test_reset_defaults(settings):
    settings.setKey("plan/eta", "0.02")
    settings.resetDefaults()
    assert not settings.keyExists("plan/eta")
    assert settings.keyExists(f"{GLOBAL_GROUP}/version")


def test_get_settings_reuses_objects(tmp_path):
    path = tmp_path / "shared.ini"
    assert get_settings(path) is get_settings(str(path))


def test_option_resolution(settings):
    settings.setKey("plan/eta", "0.02")
    settings.setKey("train/dirichlet", "false")
    unset = Options(argparse.Namespace(eta=None), settings)
    assert unset.get("plan", "eta", 0.03) == 0.02
    assert unset.get("plan", "d_s", 0.05) == 0.05
    assert unset.get("train", "dirichlet", True, bool) is False
    given = Options(argparse.Namespace(eta=0.01), settings)
    assert given.get("plan", "eta", 0.03) == 0.01
    assert Options(argparse.Namespace(), None).get("plan", "eta", 0.03) == 0.03
