import pytest

from hybridreg.harness.config import Config, parse_flat


def test_defaults_round_trip(tmp_path):
    cfg = Config()
    p = tmp_path / "c.cfg"
    p.write_text(cfg.dump())
    assert Config.load(p) == cfg
    assert set(parse_flat(cfg.dump())) == set(Config.keys())


def test_every_key_overridable():
    base = Config().to_flat()
    for key, val in base.items():
        if isinstance(val, bool):
            new = not val
        elif isinstance(val, int):
            new = val - 1 if val > 1 else val + 1
        else:
            new = val * 0.5
        assert Config().override({key: str(new)}).to_flat()[key] == new


def test_parse_comments_and_errors(tmp_path):
    assert parse_flat("# c\n\n a.b = 3  # trailing\n") == {"a.b": "3"}
    with pytest.raises(ValueError, match="line 2"):
        parse_flat("a.b = 1\nnonsense\n")
    with pytest.raises(KeyError):
        Config().override({"grid.nope": "1"})
    with pytest.raises(KeyError):
        Config().override({"nosection.p1": "1"})
    with pytest.raises(ValueError, match="grid.dense"):
        Config().override({"grid.dense": "two"})
    with pytest.raises(ValueError):
        Config().override({"features.aggregate": "maybe"})


def test_bool_spellings():
    for s, v in (("true", True), ("0", False), ("Yes", True), ("off", False)):
        assert Config().override({"features.aggregate": s}).features.aggregate is v


def test_scaled_touches_only_lengths():
    a, b = Config().to_flat(), Config().scaled(20).to_flat()
    assert b["grid.p2"] == pytest.approx(20 * a["grid.p2"])
    assert b["sm.tau"] == pytest.approx(20 * a["sm.tau"])
    assert b["eval.rmse_thresh"] == pytest.approx(20 * a["eval.rmse_thresh"])
    assert b["match.K"] == a["match.K"]
    assert b["sampler.gamma1"] == a["sampler.gamma1"]
