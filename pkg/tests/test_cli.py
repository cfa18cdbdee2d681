"""Spec-file runner: parsing, dispatch, outputs, and exit codes."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coulombgas import cli
from coulombgas.cli import (COMMANDS, ExperimentSpec, SpecError, main,
                            parse_spec_text)


def write_spec(tmp_path, text, name="run.spec"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def read_kv(path):
    out = {}
    for line in open(path):
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def hash_dir(path):
    import hashlib
    out = {}
    for name in sorted(os.listdir(path)):
        with open(os.path.join(path, name), "rb") as fh:
            out[name] = hashlib.sha256(fh.read()).hexdigest()
    return out


SAMPLE_SPEC = """\
command = sample
output = {out}
seed = 7
chain.n = 12
chain.sweeps = 800
chain.burn = 200
chain.stride = 5
"""


# ---------------------------------------------------------------------------
# parsing


def test_minimal_spec_fills_defaults():
    spec = parse_spec_text("command = sample\noutput = /tmp/x\n")
    assert spec.command == "sample"
    assert spec.seed == 0
    assert spec.reproducible is False
    assert spec.threads is None
    assert set(spec.params) == set(COMMANDS["sample"])
    assert spec.params["chain.beta"] == 2.0
    assert spec.params["chain.kernel"] == "log2"


def test_comments_and_blank_lines_ignored():
    spec = parse_spec_text("# header\n\ncommand = flow\noutput = o\n"
                           "  # indented comment\nflow.dt = 0.5\n")
    assert spec.params["flow.dt"] == 0.5


@pytest.mark.parametrize("text,needle", [
    ("output = o\n", "command"),
    ("command = sample\n", "output"),
    ("command = dance\noutput = o\n", "dance"),
    ("command = sample\noutput = o\nchain.betta = 2\n", "chain.betta"),
    ("command = sample\noutput = o\nchain.beta = fast\n", "chain.beta"),
    ("command = sample\noutput = o\nflow.dt = 0.1\n", "flow.dt"),
    ("command = sample\noutput = o\nseed = 1.5\n", "seed"),
    ("command = sample\ncommand = flow\noutput = o\n", "duplicate"),
    ("command = sample\noutput = o\njust words\n", "key = value"),
    ("command = sample\noutput = o\n= 3\n", "empty key"),
    ("command = sample\noutput = o\nreproducible = maybe\n",
     "reproducible"),
    ("command = sample\noutput = o\nchain.kernel = log7\n", "log1/log2"),
])
def test_parse_errors_name_the_problem(text, needle):
    with pytest.raises(SpecError, match=".*") as err:
        parse_spec_text(text)
    assert needle in str(err.value)


def test_parse_errors_carry_line_numbers():
    with pytest.raises(SpecError, match="line 4"):
        parse_spec_text("command = sample\noutput = o\n\nbogus.key = 1\n")


@settings(max_examples=60, deadline=None)
@given(key=st.sampled_from(sorted(COMMANDS["sample"])),
       tweak=st.sampled_from(["x", "_", "9"]),
       where=st.sampled_from(["prefix", "suffix"]))
def test_fuzzed_key_mutations_rejected(key, tweak, where):
    mutated = tweak + key if where == "prefix" else key + tweak
    text = "command = sample\noutput = o\n%s = 1\n" % mutated
    with pytest.raises(SpecError) as err:
        parse_spec_text(text)
    assert mutated in str(err.value)
    assert "line 3" in str(err.value)


@settings(max_examples=40, deadline=None)
@given(value=st.text(alphabet="abcdefg !?", min_size=1, max_size=8))
def test_fuzzed_numeric_values_rejected(value):
    text = "command = sample\noutput = o\nchain.beta = %s\n" % value
    with pytest.raises(SpecError) as err:
        parse_spec_text(text)
    assert "chain.beta" in str(err.value)


def test_resolved_spec_reparses_identically():
    spec = parse_spec_text("command = minimize\noutput = o\nseed = 3\n"
                           "minimize.n = 9\nthreads = 2\n")
    again = parse_spec_text(spec.resolved_text())
    assert again == spec


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), beta=st.floats(1e-3, 1e3),
       sweeps=st.integers(1, 10**6), repro=st.booleans())
def test_resolved_roundtrip_property(seed, beta, sweeps, repro):
    text = ("command = sample\noutput = o\nseed = %d\nreproducible = %s\n"
            "chain.beta = %.17g\nchain.sweeps = %d\n"
            % (seed, "true" if repro else "false", beta, sweeps))
    spec = parse_spec_text(text)
    assert parse_spec_text(spec.resolved_text()) == spec
    assert isinstance(spec, ExperimentSpec)


# ---------------------------------------------------------------------------
# help and invocation


def test_no_arguments_prints_help_and_succeeds(capsys):
    assert main([]) == 0
    out = capsys.readouterr().out
    assert out.startswith("usage:")
    for name in COMMANDS:
        assert name in out


def test_help_lists_every_parameter_and_default(capsys):
    assert main(["help"]) == 0
    out = capsys.readouterr().out
    for schema in COMMANDS.values():
        for key, param in schema.items():
            assert key in out
            if param.default is not cli._REQUIRED:
                assert "default" in out
    assert "default 1.7" in out           # annealing cooling factor
    assert "default 20000" in out         # chain sweeps
    assert "COULOMBGAS_THREADS" in out


def test_help_single_command(capsys):
    assert main(["help", "lattice"]) == 0
    out = capsys.readouterr().out
    assert "lattice.s" in out
    assert "chain.beta" not in out


def test_help_unknown_command_exits_2(capsys):
    assert main(["help", "dance"]) == 2
    captured = capsys.readouterr()
    assert captured.out.startswith("usage:")
    assert "dance" in captured.err


def test_missing_spec_file_exits_2(tmp_path, capsys):
    assert main([str(tmp_path / "nope.spec")]) == 2
    assert "nope.spec" in capsys.readouterr().err


def test_extra_arguments_exit_2(tmp_path, capsys):
    assert main(["a", "b"]) == 2


def test_parse_error_exit_2_and_stderr_names_key(tmp_path, capsys):
    path = write_spec(tmp_path, "command = sample\noutput = o\n"
                                "chain.betta = 2\n")
    assert main([path]) == 2
    err = capsys.readouterr().err
    assert "chain.betta" in err and "line 3" in err


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "coulombgas.cli", "help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("usage:")


# ---------------------------------------------------------------------------
# dispatch plumbing


def test_output_path_collision_exits_2(tmp_path, capsys):
    blocker = tmp_path / "taken"
    blocker.write_text("a file, not a directory\n")
    path = write_spec(tmp_path, "command = sample\noutput = %s\n" % blocker)
    assert main([path]) == 2


def test_runtime_error_exits_1_and_manifest_records_it(tmp_path,
                                                       monkeypatch, capsys):
    def boom(spec, out):
        raise RuntimeError("deliberate failure")

    monkeypatch.setitem(cli._RUNNERS, "sample", boom)
    out = tmp_path / "out"
    path = write_spec(tmp_path, "command = sample\noutput = %s\n" % out)
    assert main([path]) == 1
    manifest = read_kv(out / "manifest.txt")
    assert manifest["status"] == "runtime-error"
    assert "deliberate failure" in manifest["error"]
    assert "numpy" in manifest
    assert (out / "spec.txt").exists()


def test_module_usage_error_exits_2_with_manifest(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = fluct\noutput = %s\nfluct.n = 8\n"
                      "fluct.sweeps = 1200\nfluct.burn = 200\n"
                      "fluct.stride = 5\nfluct.f_radius = 5\n" % out)
    assert main([path]) == 2
    manifest = read_kv(out / "manifest.txt")
    assert manifest["status"] == "usage-error"
    assert "error" in manifest


def test_threads_zero_rejected(tmp_path, capsys):
    path = write_spec(tmp_path, "command = sample\noutput = %s\n"
                                "threads = 0\n" % (tmp_path / "o"))
    assert main([path]) == 2


def test_threads_env_garbage_rejected(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("COULOMBGAS_THREADS", "many")
    path = write_spec(tmp_path, "command = sample\noutput = %s\n"
                                % (tmp_path / "o"))
    assert main([path]) == 2


def test_threads_env_recorded_in_manifest(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("COULOMBGAS_THREADS", "1")
    out = tmp_path / "out"
    path = write_spec(tmp_path, SAMPLE_SPEC.format(out=out))
    assert main([path]) == 0
    assert read_kv(out / "manifest.txt")["threads"] == "1"


# ---------------------------------------------------------------------------
# end-to-end runs, one per command


def test_equilibrium_run(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = equilibrium\noutput = %s\n"
                      "equilibrium.cells = 64\n"
                      "equilibrium.half_width = 1.5\n" % out)
    assert main([path]) == 0
    report = read_kv(out / "report.txt")
    assert report["converged"] == "true"
    assert report["euler_lagrange_passed"] == "true"
    head = open(out / "density.csv").read(200)
    assert head.startswith("# grid d=2")
    assert "density" in head
    assert read_kv(out / "manifest.txt")["status"] == "ok"


def test_flow_run(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = flow\noutput = %s\nflow.n = 24\n"
                      "flow.dt = 0.01\nflow.time = 0.2\nseed = 1\n" % out)
    assert main([path]) == 0
    rows = np.loadtxt(out / "flow.csv", delimiter=",", skiprows=1)
    times = rows[:, 0]
    assert times[0] == 0.0
    assert np.all(np.diff(times) > 0)
    # an unconfined patch spreads
    assert rows[-1, 2] > rows[0, 2]
    report = read_kv(out / "report.txt")
    assert float(report["energy_drift"]) > 0.0   # gradient flow descends


def test_sample_run(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path, SAMPLE_SPEC.format(out=out))
    assert main([path]) == 0
    series = np.loadtxt(out / "series.csv", delimiter=",", skiprows=1)
    assert series.shape == (800, 4)
    summary = read_kv(out / "summary.txt")
    assert int(summary["n_snapshots"]) == (800 - 200) // 5
    assert 0.0 < float(summary["acceptance_mean"]) < 1.0
    final = np.loadtxt(out / "final_positions.csv", delimiter=",",
                       skiprows=1)
    assert final.shape == (12, 2)


def test_minimize_run(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = minimize\noutput = %s\nminimize.n = 10\n"
                      "minimize.stages = 8\n"
                      "minimize.sweeps_per_stage = 40\n" % out)
    assert main([path]) == 0
    report = read_kv(out / "report.txt")
    assert report["converged"] == "true"
    assert float(report["grad_max"]) < 1e-7
    stages = np.loadtxt(out / "stages.csv", delimiter=",", skiprows=1)
    assert stages.shape == (8, 2)


def test_lattice_run(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = lattice\noutput = %s\n"
                      "lattice.grid_nx = 5\nlattice.grid_ny = 5\n"
                      "lattice.starts = 4\n" % out)
    assert main([path]) == 0
    report = read_kv(out / "report.txt")
    assert abs(float(report["tau_star_y"]) - np.sqrt(3) / 2) < 1e-6
    assert float(report["torus_energy_gap"]) < 0.0
    assert float(report["zeta_triangular"]) < float(report["zeta_square"])
    grid = np.loadtxt(out / "zeta_grid.csv", delimiter=",", skiprows=1)
    assert grid.shape == (25, 3)


def test_fluct_run(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = fluct\noutput = %s\nseed = 3\n"
                      "fluct.n = 16\nfluct.sweeps = 1500\n"
                      "fluct.burn = 300\nfluct.stride = 5\n"
                      "fluct.window = 1.5\n" % out)
    assert main([path]) == 0
    clt = read_kv(out / "clt.txt")
    assert "predicted_variance" in clt
    assert "ks_distance" in clt
    pc = open(out / "pair_correlation.csv").readline()
    assert pc.startswith("r,g,sigma")
    nv = np.loadtxt(out / "number_variance.csv", delimiter=",", skiprows=1)
    assert nv.shape[0] == 5
    report = read_kv(out / "report.txt")
    assert float(report["number_variance_slope"]) < 2.0


def test_splitdiag_run(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = splitdiag\noutput = %s\n"
                      "split.n = 12\nsplit.draws = 16\n" % out)
    assert main([path]) == 0
    report = read_kv(out / "report.txt")
    assert float(report["max_relative_error"]) < 1e-10
    cross = float(report["max_cross_per_point_inside"])
    assert 0.0 < cross < 5e-3 or cross < 1e-12
    rows = np.loadtxt(out / "split.csv", delimiter=",", skiprows=1)
    assert rows.shape == (16, 7)
    assert rows[:, 1].sum() >= 8    # the odd draws are inside by build


# ---------------------------------------------------------------------------
# output format and reproducibility


def test_csv_lf_endings_and_header(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = flow\noutput = %s\nflow.n = 8\n"
                      "flow.dt = 0.02\nflow.time = 0.1\n" % out)
    assert main([path]) == 0
    raw = open(out / "flow.csv", "rb").read()
    assert b"\r" not in raw
    assert raw.startswith(b"time,max_radius_sq,patch_radius_sq,energy\n")
    for name in ("report.txt", "manifest.txt", "spec.txt"):
        assert b"\r" not in open(out / name, "rb").read()


def test_floats_written_at_full_precision(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = lattice\noutput = %s\n"
                      "lattice.grid_nx = 3\nlattice.grid_ny = 3\n"
                      "lattice.starts = 2\n" % out)
    assert main([path]) == 0
    report = read_kv(out / "report.txt")
    from coulombgas.lattice import (lattice_configuration,
                                    torus_renormalized_energy,
                                    triangular_lattice)
    exact = torus_renormalized_energy(
        lattice_configuration(triangular_lattice()))
    assert float(report["torus_energy_triangular_exact"]) == exact


def test_reproducible_reruns_byte_identical(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      SAMPLE_SPEC.format(out=out) + "reproducible = true\n")
    assert main([path]) == 0
    first = hash_dir(out)
    assert main([path]) == 0
    assert hash_dir(out) == first
    assert "wall_time_seconds" not in read_kv(out / "manifest.txt")


def test_wall_time_present_outside_reproducible_mode(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = splitdiag\noutput = %s\nsplit.n = 8\n"
                      "split.draws = 4\n" % out)
    assert main([path]) == 0
    manifest = read_kv(out / "manifest.txt")
    assert float(manifest["wall_time_seconds"]) > 0.0
    assert manifest["seed"] == "0"


def test_spec_txt_matches_resolved_spec(tmp_path, capsys):
    out = tmp_path / "out"
    path = write_spec(tmp_path,
                      "command = splitdiag\noutput = %s\nseed = 5\n"
                      "split.draws = 4\nsplit.n = 8\n" % out)
    assert main([path]) == 0
    resolved = parse_spec_text(open(out / "spec.txt").read())
    assert resolved == cli.parse_spec_file(path)
