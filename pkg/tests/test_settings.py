import pytest

from config import settings as settings_mod
from config.settings import default_corpus, load_config_file, load_settings
from core.errors import ConfigError


def test_defaults_without_environment(monkeypatch):
    for name in ("PRNN_OUTPUT_DIR", "PRNN_LOG_LEVEL", "PRNN_CORPUS_PATH", "PRNN_WORKERS"):
        monkeypatch.delenv(name, raising=False)
    s = load_settings()
    assert s.output_dir == "runs"
    assert s.log_level == "INFO"
    assert s.corpus_path == str(default_corpus())
    assert s.workers == 1


def test_environment_overrides(monkeypatch, tmp_path):
    monkeypatch.setenv("PRNN_OUTPUT_DIR", str(tmp_path))
    monkeypatch.setenv("PRNN_LOG_LEVEL", "debug")
    monkeypatch.setenv("PRNN_WORKERS", "4")
    s = load_settings()
    assert s.output_dir == str(tmp_path)
    assert s.log_level == "DEBUG"
    assert s.workers == 4


@pytest.mark.parametrize("raw,expected", [("0", 1), ("-3", 1), ("  ", 1)])
def test_worker_count_is_at_least_one(monkeypatch, raw, expected):
    monkeypatch.setenv("PRNN_WORKERS", raw)
    assert load_settings().workers == expected


def test_non_integer_worker_count_is_a_config_error(monkeypatch):
    monkeypatch.setenv("PRNN_WORKERS", "many")
    with pytest.raises(ConfigError):
        load_settings()


def test_config_file_comments_and_blank_lines(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# header\n\ncell = lstm  # trailing\nT=12\n")
    assert load_config_file(path) == {"cell": "lstm", "T": "12"}


def test_default_corpus_prefers_the_downloaded_books(monkeypatch, tmp_path):
    bundled, fetched = tmp_path / "fables.txt", tmp_path / "gutenberg.txt"
    monkeypatch.setattr(settings_mod, "BUNDLED_CORPUS", bundled)
    monkeypatch.setattr(settings_mod, "FETCHED_CORPUS", fetched)
    assert settings_mod.default_corpus() == bundled
    fetched.write_text("Once upon a time.\n", encoding="utf-8")
    assert settings_mod.default_corpus() == fetched
