import hashlib
import json
from pathlib import Path

import numpy as np
import pytest

from fracch.cli import main
from fracch.configio import (
    CSV_COLUMNS,
    RunManifest,
    parse_config,
    persist_run,
    read_kv,
    serialize_config,
)
from fracch.solver import ConfigError, run

ROOT = Path(__file__).resolve().parents[1]

MINIMAL = "tau = 1\ndt = 0.01\nt_final = 0.05\n"


def test_minimal_document_defaults():
    sc = parse_config(MINIMAL)
    assert sc.config.newton_tol == 1e-10
    assert sc.config.newton_max_iter == 50
    assert sc.config.op_a.n_modes == 32
    assert sc.forcing is None


def test_sigma_violation_named():
    with pytest.raises(ConfigError, match=r"\[sigma-range\]"):
        parse_config(MINIMAL + "sigma = 0.5\nsigma0 = 0.5\n")


def test_obstacle_endpoint_mean_named():
    text = MINIMAL + "potential.type = double_obstacle\nphi0.kind = constant\nphi0.value = 1.0\n"
    with pytest.raises(ConfigError, match=r"\[interior-mean\]"):
        parse_config(text)


def test_infinite_energy_named():
    text = MINIMAL + "potential.type = logarithmic\nphi0.kind = mode_mix\nphi0.mean = 0\nphi0.amplitudes = 1.5\n"
    with pytest.raises(ConfigError, match=r"\[finite-energy\]"):
        parse_config(text)


@pytest.mark.parametrize(
    "extra",
    ["n_modes = many\n", "bogus_key = 3\n", "mode = explicit\n", "potential.type = quartic\n", "phi0.kind = gaussian\n"],
)
def test_bad_documents(extra):
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + extra)


def test_missing_required():
    with pytest.raises(ConfigError, match="tau"):
        parse_config("dt = 0.1\nt_final = 1\n")


def test_round_trip():
    text = MINIMAL + "phi0.kind = mode_mix\nphi0.mean = 0.2\nphi0.amplitudes = 0.3, 0.1\nseed = 4\n"
    sc = parse_config(text)
    again = parse_config(serialize_config(sc.values))
    assert again.values == sc.values
    raw = read_kv(text)
    assert {k: sc.values[k] for k in raw} == raw


def test_mode_mix_profile():
    sc = parse_config(MINIMAL + "phi0.kind = mode_mix\nphi0.mean = 0.2\nphi0.amplitudes = 0.3\n")
    x = sc.config.op_a.nodes()
    assert np.allclose(sc.phi0.nodal(), 0.2 + 0.3 * np.cos(x), atol=1e-13)


def test_file_inputs(tmp_path):
    n = 8
    np.savetxt(tmp_path / "phi0.txt", np.linspace(-0.5, 0.5, n))
    tab = np.column_stack([[0.0, 1.0], np.zeros((2, n)) + [[0.0], [1.0]]])
    np.savetxt(tmp_path / "f.txt", tab)
    text = f"n_modes = {n}\ntau = 1\ndt = 0.1\nt_final = 0.5\nphi0.kind = file\nphi0.path = phi0.txt\nforcing.kind = file\nforcing.path = f.txt\n"
    sc = parse_config(text, base_dir=tmp_path)
    assert np.allclose(sc.phi0.nodal(), np.linspace(-0.5, 0.5, n))
    assert np.allclose(sc.forcing(0.5), 0.5)


def test_noise_is_seeded():
    text = MINIMAL + "phi0.kind = constant\nphi0.value = 0.1\nphi0.noise = 0.05\n"
    a = parse_config(text + "seed = 1\n").phi0.coeffs
    b = parse_config(text + "seed = 1\n").phi0.coeffs
    c = parse_config(text + "seed = 2\n").phi0.coeffs
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_zero_run_csv(tmp_path):
    sc = parse_config("tau = 1\ndt = 0.01\nt_final = 0.03\nphi0.kind = constant\nphi0.value = 0\n")
    traj = run(sc.config, sc.phi0, sc.forcing)
    paths = persist_run(traj, RunManifest.from_config(sc.config), tmp_path)
    lines = paths["trajectory"].read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 5
    for row in lines[1:]:
        vals = row.split(",")
        # energy of the zero state is |Omega| * pi_hat(0) = pi / 4, every other metric vanishes
        metrics = dict(zip(CSV_COLUMNS, vals))
        assert float(metrics["energy"]) == pytest.approx(np.pi / 4)
        assert all(float(metrics[k]) == 0 for k in CSV_COLUMNS[2:] if k != "energy")
    summary = json.loads(paths["summary"].read_text())
    assert set(summary) == {"config", "terminal_metrics", "runtime_s", "version"}


def test_csv_byte_stable(tmp_path):
    text = (ROOT / "configs" / "regular.cfg").read_text().replace("t_final = 0.5", "t_final = 0.05")
    digests = []
    for sub in ("a", "b"):
        sc = parse_config(text)
        traj = run(sc.config, sc.phi0, sc.forcing)
        paths = persist_run(traj, RunManifest.from_config(sc.config), tmp_path / sub, dump_fields=True)
        digests.append(hashlib.sha256(paths["trajectory"].read_bytes() + paths["phi"].read_bytes()).hexdigest())
        drift = max(abs(float(r.split(",")[2]) - traj.m0) for r in paths["trajectory"].read_text().splitlines()[1:])
        assert drift <= 1e-12
    assert digests[0] == digests[1]


def test_manifest_round_trip():
    m = RunManifest.from_config(parse_config(MINIMAL).config, runtime_s=0.25)
    m.outputs = ["a.csv", "b.json"]
    assert RunManifest.from_json(m.to_json()) == m


# -- command line ----------------------------------------------------------------

def write_cfg(tmp_path, text):
    p = tmp_path / "run.cfg"
    p.write_text(text)
    return p


def test_cli_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_verify_spectral():
    assert main(["verify", "--suite", "spectral"]) == 0


def test_cli_simulate_and_limit(tmp_path):
    cfg = write_cfg(tmp_path, MINIMAL + "phi0.kind = mode_mix\nphi0.mean = 0.1\nphi0.amplitudes = 0.2\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    assert main(["limit", "--config", str(cfg), "--out", str(tmp_path / "l"), "--dump-fields"]) == 0
    summary = json.loads((tmp_path / "l" / "run.json").read_text())
    assert summary["config"]["config"]["mode"] == "limit"
    assert (tmp_path / "l" / "run_phi.csv").exists()


def test_cli_config_error_exit(tmp_path):
    cfg = write_cfg(tmp_path, MINIMAL + "sigma = 0.9\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 2


def test_cli_sweep_sigma(tmp_path):
    cfg = ROOT / "configs" / "regular.cfg"
    out = tmp_path / "sw"
    assert main(["sweep-sigma", "--config", str(cfg), "--out", str(out), "--sigmas", "0.4,0.2,0.1,0.05"]) == 0
    rows = (out / "sweep_sigma.csv").read_text().splitlines()
    assert len(rows) == 5
    err = [float(r.split(",")[1]) for r in rows[1:]]
    assert all(a > b for a, b in zip(err, err[1:]))


def test_cli_sweep_lambda_and_contdep(tmp_path):
    cfg = write_cfg(tmp_path, MINIMAL + "phi0.kind = mode_mix\nphi0.mean = 0.1\nphi0.amplitudes = 0.4\n")
    assert main(["sweep-lambda", "--config", str(cfg), "--out", str(tmp_path), "--lambdas", "0.1,0.01,0.001"]) == 0
    assert main(["contdep", "--config", str(cfg), "--out", str(tmp_path), "--pairs", "2"]) == 0
    assert len(json.loads((tmp_path / "contdep.json").read_text())) == 2


def test_cli_bad_list(tmp_path):
    assert main(["sweep-sigma", "--config", "x", "--out", str(tmp_path), "--sigmas", "a,b"]) == 2
