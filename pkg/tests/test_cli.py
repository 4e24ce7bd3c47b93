import csv
import hashlib
import json
import os

import numpy as np
import pytest

from hallmild import cli
from hallmild.fieldio import write_field
from hallmild.spectral import Grid, SpaceTimeField, SpectralVectorField, fft3

SMALL = """[grid]
n = 16
[time]
t_final = 0.1
n_t = 8
[data]
amplitude = {amp}
"""


def _cfg(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _manifest(out):
    with open(os.path.join(out, "manifest.json"), encoding="utf-8") as fh:
        return json.load(fh)


def _check_manifest(out):
    man = _manifest(out)
    assert man["complete"]
    listed = {f["path"] for f in man["files"]}
    present = {n for n in os.listdir(out) if n != "manifest.json" and not n.startswith(".tmp-")}
    assert listed == present
    for f in man["files"]:
        with open(os.path.join(out, f["path"]), "rb") as fh:
            assert hashlib.sha256(fh.read()).hexdigest() == f["sha256"]
    return man


def test_run_zero_amplitude(tmp_path):
    out = str(tmp_path / "o")
    code = cli.main(["run", "--config", _cfg(tmp_path, SMALL.format(amp=0.0)), "--out", out])
    assert code == 0
    assert len(_rows(os.path.join(out, "trace.csv"))) == 1
    _check_manifest(out)


def test_run_malformed_config(tmp_path, capsys):
    text = "[grid]\nn = 16\n[solver]\ntol = small\n"
    code = cli.main(["run", "--config", _cfg(tmp_path, text), "--out", str(tmp_path / "o")])
    assert code == 64
    err = capsys.readouterr().err
    assert "line 4" in err and "'tol'" in err
    assert not os.path.exists(tmp_path / "o" / "manifest.json")


def test_run_small_amplitude(tmp_path):
    out = str(tmp_path / "o")
    code = cli.main(["run", "--config", _cfg(tmp_path, SMALL.format(amp=1e-3)), "--out", out])
    assert code == 0
    rows = _rows(os.path.join(out, "trace.csv"))
    assert len(rows) >= 3
    rho = [float(r["rho"]) for r in rows[1:]]
    assert rows[0]["rho"] == "" and all(0 < x < 1 for x in rho)
    man = _check_manifest(out)
    assert man["verdict"] == "converged" and "u.hmf" in {f["path"] for f in man["files"]}
    assert "div(b (x) b)" in man["lorentz_identity"]
    with open(os.path.join(out, "run.json"), encoding="utf-8") as fh:
        assert json.load(fh)["max_divergence"] <= 1e-10


def test_run_diverged_exit_code(tmp_path):
    text = SMALL.format(amp=30.0) + "[solver]\nmax_iterations = 12\n"
    assert cli.main(["run", "--config", _cfg(tmp_path, text), "--out", str(tmp_path / "o")]) == 2


def test_run_max_iter_exit_code(tmp_path):
    text = SMALL.format(amp=0.1) + "[solver]\nmax_iterations = 2\nmin_iterations = 1\n"
    assert cli.main(["run", "--config", _cfg(tmp_path, text), "--out", str(tmp_path / "o")]) == 3


def test_missing_config_is_io_error(tmp_path):
    assert cli.main(["run", "--config", str(tmp_path / "nope.ini")]) == 74


def test_bad_arguments(tmp_path):
    with pytest.raises(SystemExit) as info:
        cli.main(["sweep", "--amplitudes", "a,b"])
    assert info.value.code == 64
    assert cli.main([]) == 64


def test_bad_threads_env(tmp_path, monkeypatch):
    monkeypatch.setenv("HALLMILD_THREADS", "many")
    code = cli.main(["run", "--config", _cfg(tmp_path, SMALL.format(amp=0.0)), "--out", str(tmp_path / "o")])
    assert code == 64


def test_sweep_tiny_amplitudes(tmp_path, capsys):
    out = str(tmp_path / "o")
    text = SMALL.replace("n = 16", "n = 8")
    code = cli.main(["sweep", "--config", _cfg(tmp_path, text.format(amp=0.0)), "--amplitudes", "0,1e-6,1e-5", "--out", out])
    assert code == 0
    rows = _rows(os.path.join(out, "sweep.csv"))
    assert [r["verdict"] for r in rows] == ["converged"] * 3
    with open(os.path.join(out, "sweep.json"), encoding="utf-8") as fh:
        rep = json.load(fh)
    assert rep["a_star"] >= 1e-6 and rep["monotone"]
    _check_manifest(out)


def test_sweep_needs_three_amplitudes(tmp_path):
    assert cli.main(["sweep", "--amplitudes", "0,1e-3", "--out", str(tmp_path / "o")]) == 64


def test_sweep_box_study(tmp_path):
    out = str(tmp_path / "o")
    text = SMALL.replace("n = 16", "n = 8").format(amp=1e-3)
    code = cli.main(
        ["sweep", "--config", _cfg(tmp_path, text), "--amplitudes", "0,1e-4,1e-3", "--box-lengths", "6.283185307179586,12.566370614359172", "--out", out]
    )
    assert code == 0
    rows = _rows(os.path.join(out, "box_study.csv"))
    assert [r["verdict"] for r in rows] == ["converged", "converged"]


# ---------------------------------------------------------------------------
# norms


def _spatial_file(path, grid, coeffs):
    write_field(str(path), SpectralVectorField(grid, coeffs))
    return str(path)


def _norms(tmp_path, path, *extra):
    out = str(tmp_path / ("n-" + os.path.basename(path)))
    code = cli.main(["norms", path, "--out", out, *extra])
    assert code == 0
    with open(os.path.join(out, "norms.json"), encoding="utf-8") as fh:
        rep = json.load(fh)
    _check_manifest(out)
    return rep, _rows(os.path.join(out, "blocks.csv"))


ISO = ["--flavor", "isotropic-spatial"]


def test_norms_zero_field(tmp_path):
    g = Grid(8)
    path = _spatial_file(tmp_path / "z.hmf", g, np.zeros((3,) + g.shape, complex))
    rep, blocks = _norms(tmp_path, path, *ISO)
    assert rep["total"] == 0 and blocks and all(float(b["weighted_norm"]) == 0 for b in blocks)


def test_norms_single_shell(tmp_path):
    g = Grid(16)
    c = np.zeros((3,) + g.shape, complex)
    c[0, 0, 4, 0] = c[0, 0, -4, 0] = 0.5  # |k| = 4 sits at the centre of block 2
    rep, blocks = _norms(tmp_path, _spatial_file(tmp_path / "s.hmf", g, c), *ISO, "--s", "0")
    best = max(blocks, key=lambda b: float(b["weighted_norm"]))
    assert int(best["j"]) == 2


def _smooth(grid):
    x, y, z = grid.coordinates
    u = np.stack([np.sin(y) * np.cos(2 * z), np.sin(2 * z) + np.cos(x), np.cos(x - y)])
    return fft3(u)


def test_norms_resolution_study(tmp_path):
    totals = []
    for n in (16, 32):
        g = Grid(n)
        rep, _ = _norms(tmp_path, _spatial_file(tmp_path / f"r{n}.hmf", g, _smooth(g)), *ISO)
        totals.append(rep["total"])
    assert abs(totals[0] - totals[1]) <= 0.02 * totals[1]


def test_norms_flavor_mismatch(tmp_path):
    g = Grid(8)
    path = _spatial_file(tmp_path / "z.hmf", g, np.zeros((3,) + g.shape, complex))
    assert cli.main(["norms", path, "--flavor", "anisotropic-spacetime", "--out", str(tmp_path / "o")]) == 64


def test_norms_spacetime_file(tmp_path):
    g = Grid(8)
    times = np.linspace(0, 0.1, 8)
    c = np.stack([np.exp(-t) * _smooth(g) for t in times])
    path = str(tmp_path / "st.hmf")
    write_field(path, SpaceTimeField(g, times, c))
    rep, blocks = _norms(tmp_path, path)
    assert rep["total"] > 0 and len(blocks) > 1


def test_norms_bad_file(tmp_path):
    path = tmp_path / "bad.hmf"
    path.write_bytes(b"[grid]\nn = 8\n" * 10)
    assert cli.main(["norms", str(path), "--out", str(tmp_path / "o")]) == 74


# ---------------------------------------------------------------------------
# verify, reference, compare


VERIFY = """[battery]
samples = {k}
n = 8
n_t = 8
"""


def test_verify_small_corpus_warns(tmp_path, capsys):
    out = str(tmp_path / "o")
    with pytest.warns(UserWarning):
        cli.main(["verify", "--config", _cfg(tmp_path, VERIFY.format(k=10)), "--out", out])
    assert "insufficient calibration samples" in capsys.readouterr().out
    with open(os.path.join(out, "battery.json"), encoding="utf-8") as fh:
        assert json.load(fh)["warnings"]


def test_verify_deterministic(tmp_path):
    cfg = _cfg(tmp_path, VERIFY.format(k=12))
    hashes = []
    for run in ("a", "b"):
        out = str(tmp_path / run)
        with pytest.warns(UserWarning):
            cli.main(["verify", "--config", cfg, "--seed", "4", "--threads", "1", "--out", out])
        man = _check_manifest(out)
        hashes.append({f["path"]: f["sha256"] for f in man["files"]})
    assert hashes[0] == hashes[1]


def test_reference_and_compare(tmp_path, capsys):
    text = SMALL.format(amp=1e-2) + "[solver]\ntol = 1e-14\nmax_iterations = 40\n[imex]\ndt = 1e-3\n"
    cfg = _cfg(tmp_path, text)
    mild, ref, cmp_ = (str(tmp_path / x) for x in ("mild", "ref", "cmp"))
    assert cli.main(["run", "--config", cfg, "--out", mild]) == 0
    assert cli.main(["reference", "--config", cfg, "--out", ref]) == 0
    _check_manifest(ref)
    assert cli.main(["compare", mild, ref, "--out", cmp_]) == 0
    with open(os.path.join(cmp_, "compare.json"), encoding="utf-8") as fh:
        rep = json.load(fh)
    assert rep["passed"] and rep["rel_l2_gap"] <= rep["tol_model"]
    # restarting from the stored fields reproduces the configured-data run
    ref2 = str(tmp_path / "ref2")
    code = cli.main(
        ["reference", "--config", cfg, "--out", ref2, "--field-u", os.path.join(mild, "u.hmf"), "--field-b", os.path.join(mild, "b.hmf")]
    )
    assert code == 0
    with open(os.path.join(ref, "u_final.hmf"), "rb") as a, open(os.path.join(ref2, "u_final.hmf"), "rb") as b:
        assert a.read() == b.read()


def test_reference_needs_both_fields(tmp_path):
    assert cli.main(["reference", "--field-u", "x.hmf", "--out", str(tmp_path / "o")]) == 64


# ---------------------------------------------------------------------------
# output documentation and atomicity


def test_describe_output_covers_every_column(tmp_path, capsys):
    assert cli.main(["--describe-output"]) == 0
    doc = capsys.readouterr().out
    out = str(tmp_path / "o")
    cli.main(["run", "--config", _cfg(tmp_path, SMALL.format(amp=1e-3)), "--out", out])
    cli.main(["sweep", "--config", _cfg(tmp_path, SMALL.replace("n = 16", "n = 8").format(amp=0)), "--amplitudes", "0,1e-6,1e-5", "--out", out + "s", "--box-lengths", "6.3"])
    for path in [os.path.join(out, n) for n in os.listdir(out)] + [os.path.join(out + "s", n) for n in os.listdir(out + "s")]:
        if path.endswith(".csv"):
            name = os.path.basename(path)
            assert name in doc
            for col in _rows(path)[0]:
                assert f"  {col}: " in doc, (name, col)


def test_stale_manifest_removed_on_failure(tmp_path, monkeypatch):
    out = tmp_path / "o"
    out.mkdir()
    (out / "manifest.json").write_text('{"complete": true}', encoding="utf-8")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(cli.picard, "run", boom)
    code = cli.main(["run", "--config", _cfg(tmp_path, SMALL.format(amp=1e-3)), "--out", str(out)])
    assert code == 74
    assert not (out / "manifest.json").exists()


def test_csv_quoting(tmp_path):
    em = cli.Emitter(str(tmp_path), "x", {}, 0, 1)
    em.csv("t.csv", ["a", "b"], [{"a": 'say "hi", ok', "b": float("nan")}])
    em.finish()
    raw = (tmp_path / "t.csv").read_bytes()
    assert raw == b'a,b\r\n"say ""hi"", ok",\r\n'
