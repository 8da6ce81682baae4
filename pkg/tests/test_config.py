"""Config schema validation and typed accessors."""

import json

import pytest

from bsvie import ConfigurationError, RunConfig, load_config, validate_config


def _raw(**overrides):
    raw = {
        "run": {"label": "t", "horizon": 1.0, "steps": 20, "seed": 3, "backend": "tree"},
        "problem": {
            "generator": {"family": "entropic_diag", "gamma": 1.0, "dim": 1},
            "free_term": {"kind": "terminal", "functional": "bounded_sin", "scale": 1.0},
        },
    }
    raw.update(overrides)
    return raw


def test_valid_config_round_trip():
    raw = _raw()
    cfg = RunConfig.from_dict(raw)
    assert json.loads(cfg.to_json()) == raw
    assert cfg.label == "t"
    assert cfg.horizon == 1.0
    assert cfg.steps == 20
    assert cfg.seed == 3
    assert cfg.backend == "tree"
    assert cfg.output_prefix == "t"
    assert cfg.output_formats == ("csv", "png")


def test_sha_is_stable_and_tracks_content():
    a = RunConfig.from_dict(_raw())
    b = RunConfig.from_dict(_raw())
    assert a.sha256() == b.sha256()
    c = a.with_overrides(seed=99)
    assert c.seed == 99
    assert c.sha256() != a.sha256()
    assert a.seed == 3  # original untouched
    assert a.with_overrides(seed=None) is a


def test_schema_rejects_out_of_range_delta():
    raw = _raw()
    raw["problem"]["generator"] = {"family": "subquad_diag", "gamma": 1.0,
                                   "kappa": 2.0, "delta": 1.5}
    with pytest.raises(ConfigurationError) as exc:
        validate_config(raw)
    assert exc.value.path == "problem.generator.delta"
    assert "maximum" in str(exc.value)


def test_schema_rejects_unknown_keys_with_path():
    raw = _raw()
    raw["run"]["stepss"] = 10
    with pytest.raises(ConfigurationError) as exc:
        RunConfig.from_dict(raw)
    assert exc.value.path == "run"
    assert "stepss" in str(exc.value)


def test_schema_requires_run_section():
    with pytest.raises(ConfigurationError):
        RunConfig.from_dict({"problem": _raw()["problem"]})


def test_schema_rejects_zero_steps():
    raw = _raw()
    raw["run"]["steps"] = 0
    with pytest.raises(ConfigurationError) as exc:
        RunConfig.from_dict(raw)
    assert exc.value.path == "run.steps"


def test_constructor_errors_wrapped_past_schema():
    """delta = 1 clears the schema range but the subquadratic family needs a
    strictly smaller exponent; the dataclass refusal must surface as a config
    error with the generator path."""
    raw = _raw()
    raw["problem"]["generator"] = {"family": "subquad_diag", "gamma": 1.0,
                                   "kappa": 2.0, "delta": 1.0}
    cfg = RunConfig.from_dict(raw)
    with pytest.raises(ConfigurationError) as exc:
        cfg.generator_spec()
    assert exc.value.path == "problem.generator"


def test_require_missing_section():
    cfg = RunConfig.from_dict(_raw())
    with pytest.raises(ConfigurationError) as exc:
        cfg.require("sweep")
    assert exc.value.path == "sweep"


def test_builders_produce_configured_objects():
    raw = _raw()
    raw["solver"] = {
        "scheme": "implicit", "eps_inner": 1e-13, "max_inner": 80, "z_max": 25.0,
        "mc": {"n_paths": 5000,
               "basis": {"family": "polynomial_in_W", "degree": 3, "ridge": 1e-9}},
        "picard": {"max_outer": 7, "eps_outer": 1e-7, "k_w": 2.0, "divergence_window": 4},
    }
    cfg = RunConfig.from_dict(raw)
    assert cfg.tree_config().eps_inner == 1e-13
    assert cfg.tree_config().max_inner == 80
    assert cfg.tree_config().z_max == 25.0
    assert cfg.mc_config().z_max == 25.0
    assert cfg.n_paths == 5000
    assert cfg.basis_spec().degree == 3
    assert cfg.basis_spec().ridge == 1e-9
    pc = cfg.picard_config()
    assert (pc.max_outer, pc.eps_outer, pc.k_w, pc.divergence_window) == (7, 1e-7, 2.0, 4)
    gen = cfg.generator_spec()
    assert gen.family == "entropic_diag"
    problem = cfg.problem()
    assert problem.horizon == 1.0
    assert cfg.grid().steps == 20
    assert cfg.tree().grid.steps == 20


def test_load_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigurationError) as exc:
        load_config(bad)
    assert "invalid JSON" in str(exc.value)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(ConfigurationError):
        load_config(arr)
    good = tmp_path / "good.json"
    good.write_text(json.dumps(_raw()))
    assert load_config(good).steps == 20


def test_mc_backend_accessors():
    raw = _raw()
    raw["run"]["backend"] = "mc"
    raw["solver"] = {"mc": {"n_paths": 400}}
    cfg = RunConfig.from_dict(raw)
    ens = cfg.ensemble()
    assert ens.n_paths == 400
    assert ens.grid.steps == 20


def test_user_table_family_not_configurable():
    """Callable-backed drivers are a library feature; configs must not be
    able to name them (nothing to deserialize a callable from)."""
    raw = _raw()
    raw["problem"]["generator"] = {"family": "user_table"}
    with pytest.raises(ConfigurationError):
        validate_config(raw)
