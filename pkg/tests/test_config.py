"""Config parsing and schema validation."""

import pytest

from mbfem.config import SCENARIOS, apply_overrides, parse_config
from mbfem.errors import ParseError, SchemaError


def test_minimal_toml_gets_defaults():
    cfg = parse_config('scenario = "willmore_torus"\n')
    assert cfg.scenario == "willmore_torus"
    assert cfg.params == SCENARIOS["willmore_torus"].defaults
    assert cfg.output_dir == "runs" and cfg.seed == 0


def test_toml_with_params_and_comments():
    cfg = parse_config(
        'scenario = "adr_rotating_hemisphere"\n'
        'output_dir = "out"\n'
        "[params]\n"
        "h = 0.2      # mesh size\n"
        "tau = 0.05\n")
    assert cfg.params["h"] == 0.2
    assert cfg.params["tau"] == 0.05
    assert cfg.params["T"] == 1.0          # untouched default
    assert cfg.output_dir == "out"


def test_json_alternative():
    cfg = parse_config('{"scenario": "ch_cylinder", '
                       '"params": {"solver": 2, "potential": "F1"}}')
    assert cfg.params["solver"] == 2
    assert cfg.params["potential"] == "F1"


def test_unknown_param_named_in_error():
    with pytest.raises(SchemaError) as exc:
        parse_config('scenario = "adr_rotating_hemisphere"\n'
                     "[params]\ngammma_b = 3.0\n")
    assert "gammma_b" in str(exc.value)


def test_all_violations_reported_at_once():
    with pytest.raises(SchemaError) as exc:
        parse_config('scenario = "adr_rotating_hemisphere"\n'
                     "bogus_top = 1\n"
                     "[params]\ngammma_b = 3.0\ntau = -1\n")
    msgs = exc.value.violations
    assert len(msgs) == 3
    joined = " ".join(msgs)
    assert "gammma_b" in joined and "tau" in joined and "bogus_top" in joined


def test_positivity_and_choice_checks():
    with pytest.raises(SchemaError, match="positive"):
        parse_config('scenario = "willmore_torus"\n[params]\ntau = 0.0\n')
    with pytest.raises(SchemaError):
        parse_config('scenario = "ch_cylinder"\n[params]\npotential = "F9"\n')
    with pytest.raises(SchemaError):
        parse_config('scenario = "willmore_torus"\n[params]\nsolver = 7\n')


def test_unknown_scenario():
    with pytest.raises(SchemaError, match="must be one of"):
        parse_config('scenario = "frobnicate"\n')


def test_invalid_toml_and_json():
    with pytest.raises(ParseError):
        parse_config("scenario = [unclosed\n")
    with pytest.raises(ParseError) as exc:
        parse_config('{"scenario": "x",}')
    assert "line" in str(exc.value)


def test_geometry_table_only_where_allowed():
    cfg = parse_config('scenario = "adr_ill_posed"\n'
                       '[geometry]\nkind = "hemisphere"\nh = 0.2\n')
    assert cfg.geometry["kind"] == "hemisphere"
    with pytest.raises(SchemaError, match="geometry"):
        parse_config('scenario = "willmore_torus"\n'
                     '[geometry]\nkind = "torus"\n')


def test_overrides():
    cfg = parse_config('scenario = "willmore_torus"\n')
    out = apply_overrides(cfg, ["tau=0.002", "solver=1", "output_dir=alt"])
    assert out.params["tau"] == 0.002
    assert out.params["solver"] == 1
    assert out.output_dir == "alt"
    with pytest.raises(SchemaError):
        apply_overrides(cfg, ["tau"])              # not key=value
    with pytest.raises(SchemaError):
        apply_overrides(cfg, ["tau=-5"])           # revalidated


def test_every_scenario_has_valid_defaults():
    for name in SCENARIOS:
        cfg = parse_config(f'scenario = "{name}"\n')
        assert cfg.params == SCENARIOS[name].defaults
