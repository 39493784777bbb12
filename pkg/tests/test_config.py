import pytest

from clad.config import RunConfig, coerce, read_config_file, resolve
from clad.errors import ConfigError


def test_defaults_validate():
    cfg = RunConfig().validate()
    assert cfg.loss_kind == "clad"
    assert cfg.effective_split_seed == 0


def test_file_then_flags(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nepochs = 70\nmargin = 0.5  # inline\nzero_day = A, B\nsquared = false\n\n", encoding="utf-8")
    cfg = resolve(str(path), {"epochs": 90, "data": None})
    assert cfg.epochs == 90
    assert cfg.margin == 0.5
    assert cfg.zero_day == ["A", "B"]
    assert cfg.squared is False


@pytest.mark.parametrize("text", ["bogus = 1\n", "epochs 5\n", "epochs = five\n", "squared = maybe\n"])
def test_bad_files(tmp_path, text):
    path = tmp_path / "bad.cfg"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError):
        read_config_file(path)


def test_missing_file():
    with pytest.raises(ConfigError):
        read_config_file("/nonexistent/run.cfg")


@pytest.mark.parametrize(
    "overrides",
    [
        {"mode": "svm"},
        {"margin": 0.0},
        {"margin": 1.5},
        {"alpha": 1.0},
        {"epochs": 5, "warmup_epochs": 10},
        {"batch_size": 0},
        {"mode": "closr", "loss": "supcon"},
        {"loss": "closr"},
        {"train_fraction": 1.0},
        {"d_model": 0},
    ],
)
def test_invalid(overrides):
    with pytest.raises(ConfigError):
        resolve(None, overrides)


def test_coerce_types():
    assert coerce("epochs", "12") == 12
    assert coerce("base_lr", "1e-3") == 1e-3
    assert coerce("split_seed", "none") is None
    assert coerce("holdout_validation", "yes") is True
    with pytest.raises(ConfigError):
        coerce("nope", "1")


def test_from_dict_round_trip():
    cfg = RunConfig(epochs=3, zero_day=["X"])
    assert RunConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"unknown": 1})


def test_bce_model_has_single_logit():
    m = RunConfig(loss="bce").model_config(f=4, n_heads=1)
    assert m.f_o == 1 and not m.normalize
