import math

import pytest

from hallmild.config import ConfigError, defaults, load_config, parse_config, render_config


def test_defaults_build_solver_configs():
    cfg = defaults()
    s = cfg.solver_config()
    assert s.n == 32 and s.p == 2.0 and s.hall
    assert cfg.imex_config().steps == 100


def test_override_and_types():
    cfg = parse_config("[grid]\nn = 16\n[solver]\nhall = off\n[sweep]\namplitudes = 1e-3, 2e-3\n")
    assert cfg.get("grid", "n") == 16
    assert cfg.get("solver", "hall") is False
    assert cfg.get("sweep", "amplitudes") == [1e-3, 2e-3]


@pytest.mark.parametrize(
    "text, needle",
    [
        ("[grid]\nn = 16\n\n[bogus]\nx = 1\n", "line 4: unknown section [bogus]"),
        ("[grid]\nn = 16\nm = 2\n", "line 3: unknown key 'm' in [grid]"),
        ("[solver]\n# note\n\ntol = tiny\n", "line 4: key 'tol' in [solver]"),
        ("[data]\nfamily = vortex\n", "expected one of"),
        ("[data]\namplitude = -1\n", "amplitude must be finite"),
        ("[grid]\nn = 7\n", "power of two"),
        ("[grid]\nn = 8\nn = 16\n", "n"),
    ],
)
def test_errors_name_line_and_key(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert needle in str(info.value)


def test_render_round_trip():
    cfg = parse_config("[solver]\nnorm_ceiling = inf\n[data]\nseed = 9\n")
    back = parse_config(render_config(cfg))
    assert back.values == cfg.values
    assert math.isinf(back.get("solver", "norm_ceiling"))


def test_load_rejects_binary(tmp_path):
    path = tmp_path / "x.ini"
    path.write_bytes(b"\xff\xfe\x00bad")
    with pytest.raises(ConfigError):
        load_config(path)


def test_snapshot_is_plain(tmp_path):
    import json

    snap = parse_config("[solver]\nnorm_ceiling = inf\n").snapshot()
    assert json.loads(json.dumps(snap))["solver"]["norm_ceiling"] == "inf"
