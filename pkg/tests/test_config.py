import pytest

from bgc_marl.config import ExperimentConfig, dumps_config, load_config, parse_overrides, save_config
from bgc_marl.errors import ConfigError

from pathlib import Path

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _write(tmp_path, text):
    p = tmp_path / "c.ini"
    p.write_text(text)
    return p


def test_defaults_table():
    c = ExperimentConfig()
    m, lo, t = c.model, c.loss, c.training
    assert (m.hidden_dim, m.group_dim, m.individual_dim) == (64, 32, 32)
    assert (m.gat_dropout, m.leaky_slope, m.knn_k) == (0.5, 0.2, 2)
    assert (m.mixer_embed_dim, m.mixer_layers) == (64, 2)
    assert lo.delta == 0.005
    assert (t.buffer_capacity, t.batch_size, t.workers) == (5000, 7, 7)
    assert (t.epsilon_start, t.epsilon_finish, t.epsilon_anneal_steps) == (1.0, 0.05, 50_000)
    assert (t.lr, t.grad_clip, t.target_update_interval, t.total_env_steps) == (5e-4, 10.0, 200, 200_000)


def test_shipped_configs_load():
    for p in CONFIGS.glob("*.ini"):
        load_config(p)


def test_roundtrip(tmp_path):
    cfg = load_config(CONFIGS / "smoke_2v2.ini", {"model": {"mixer": "vdn"}, "loss": {"delta": "0.01"}})
    save_config(cfg, tmp_path / "r.ini")
    again = load_config(tmp_path / "r.ini")
    assert again.to_dict() == cfg.to_dict()
    assert dumps_config(again) == dumps_config(cfg)
    assert again.model.mixer == "vdn" and again.loss.delta == 0.01


def test_missing_required_field_named(tmp_path):
    p = _write(tmp_path, "[env]\nn_allies = 3\n")
    with pytest.raises(ConfigError, match="env.n_enemies"):
        load_config(p)


@pytest.mark.parametrize("text,needle", [
    ("[env]\nn_allies=3\nn_enemies=2\nwidth=3\n", "env.width"),
    ("[env]\nn_allies=3\nn_enemies=2\n[optim]\nlr=1\n", "optim"),
    ("[env]\nn_allies=3\nn_enemies=2\n[model]\nknn_k=5\n", "model.knn_k"),
    ("[env]\nn_allies=3\nn_enemies=2\n[model]\nmixer=sum\n", "model.mixer"),
    ("[env]\nn_allies=3\nn_enemies=2\n[loss]\ndelta=0\n", "loss.delta"),
    ("[env]\nn_allies=3\nn_enemies=2\n[loss]\ngamma=1.5\n", "loss.gamma"),
    ("[env]\nn_allies=3\nn_enemies=2\n[training]\nbatch_size=abc\n", "training.batch_size"),
    ("[env]\nn_allies=3\nn_enemies=2\n[training]\nbatch_size=10\nbuffer_capacity=5\n", "batch_size"),
    ("[env]\nn_allies=3\nn_enemies=2\n[model]\nvalue_projection=maybe\n", "model.value_projection"),
    ("[env]\nn_allies=0\nn_enemies=2\n", "n_allies"),
    ("[env]\nn_allies=3\nn_enemies=2\n[model]\nlogvar_bias_init=5\n", "model.logvar_bias_init"),
    ("not an ini", "malformed"),
])
def test_invalid_configs_rejected_with_field(tmp_path, text, needle):
    with pytest.raises(ConfigError, match=needle):
        load_config(_write(tmp_path, text))


def test_unreadable_path():
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/x.ini")


def test_parse_overrides():
    assert parse_overrides(["model.mixer=vdn", "training.lr=1e-3"]) == {"model": {"mixer": "vdn"}, "training": {"lr": "1e-3"}}
    for bad in ("mixer=vdn", "model.mixer"):
        with pytest.raises(ConfigError):
            parse_overrides([bad])


def test_override_unknown_key_rejected():
    with pytest.raises(ConfigError, match="model.bogus"):
        load_config(CONFIGS / "smoke_2v2.ini", {"model": {"bogus": "1"}})


def test_bool_parsing(tmp_path):
    for val, expected in (("true", True), ("False", False), ("1", True), ("no", False)):
        cfg = load_config(_write(tmp_path, f"[env]\nn_allies=3\nn_enemies=2\n[model]\nvalue_projection={val}\n"))
        assert cfg.model.value_projection is expected
