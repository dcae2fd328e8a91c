import numpy as np
import pytest

from headgen.config import DEFAULTS, PRESETS, ConfigError, RunConfig, component_rng


def test_defaults_match_full_scale_setup():
    cfg = RunConfig()
    ut = cfg.ut_config(40000)
    assert (ut.d_model, ut.n_heads, ut.n_steps, ut.dropout_p) == (512, 8, 4, 0.3)
    tc = cfg.train_config()
    assert tc.warmup_steps == 4000 and tc.adam_betas == (0.9, 0.98)
    assert cfg.filter_spec().min_body_words == 20


def test_presets_only_use_known_keys():
    for values in PRESETS.values():
        assert set(values) <= set(DEFAULTS)
    assert RunConfig("ria")["bpe.vocab_size"] == 50000
    assert RunConfig("micro")["model.d_model"] == 64
    with pytest.raises(ConfigError):
        RunConfig("huge")


def test_file_parsing_and_types(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nseed = 7\nmodel.dropout=0.5  # inline\n\ndata.exclude_obituaries = yes\nemb.strategy = random\n")
    cfg = RunConfig("micro")
    cfg.merge_file(p)
    assert cfg["seed"] == 7 and cfg["model.dropout"] == 0.5
    assert cfg["data.exclude_obituaries"] is True and cfg["emb.strategy"] == "random"


def test_errors_carry_location():
    cfg = RunConfig()
    with pytest.raises(ConfigError, match="unknown config key"):
        cfg.set("model.width", 3)
    with pytest.raises(ConfigError, match="<config>:2"):
        cfg.merge_text("seed = 1\nseed = one\n")
    with pytest.raises(ConfigError, match="<config>:1"):
        cfg.merge_text("just words\n")
    with pytest.raises(ConfigError):
        cfg.merge_overrides(["seed"])
    with pytest.raises(ConfigError):
        cfg.merge_overrides(["data.exclude_obituaries=maybe"])


def test_overrides_win_and_dump_round_trips():
    cfg = RunConfig("micro")
    cfg.merge_overrides(["train.max_steps=9", "decode.beam = 2"])
    assert cfg["train.max_steps"] == 9 and cfg["decode.beam"] == 2
    back = RunConfig()
    back.merge_text(cfg.dumps())
    assert back == cfg


def test_component_streams_are_independent_and_reproducible():
    a = component_rng(3, "bpe").random(4)
    assert np.array_equal(a, component_rng(3, "bpe").random(4))
    assert not np.array_equal(a, component_rng(3, "train-ut").random(4))
    assert not np.array_equal(a, component_rng(4, "bpe").random(4))
