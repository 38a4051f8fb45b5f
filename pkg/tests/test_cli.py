import subprocess
import sys

from securecast.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_simulate_equivocate_3t_clean(capsys, tmp_path):
    trace = tmp_path / "run.trace"
    code, out, _ = run_cli(capsys, "simulate", "--protocol", "3t", "--n", "31",
                           "--t", "10", "--adversary", "equivocate",
                           "--seed", "7", "--trace-out", str(trace))
    assert code == 0
    assert "conflicts=0" in out
    assert trace.exists()


def test_simulate_rejects_act_capacity(capsys):
    code, _, err = run_cli(capsys, "simulate", "--protocol", "act", "--n", "10",
                           "--t", "3", "--kappa", "4", "--delta", "10")
    assert code == 1
    assert "kappa*delta" in err


def test_simulate_deterministic_bytes(capsys, tmp_path):
    out1, out2 = tmp_path / "a.trace", tmp_path / "b.trace"
    for path in (out1, out2):
        code, _, _ = run_cli(capsys, "simulate", "--protocol", "e", "--n", "4",
                             "--t", "1", "--messages", "1", "--seed", "0",
                             "--trace-out", str(path))
        assert code == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_analyze_row(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--n", "100", "--t", "10",
                           "--kappa", "3", "--delta", "5")
    assert code == 0
    header, row = out.strip().splitlines()
    cells = dict(zip(header.split(","), row.split(",")))
    assert cells["p_faulty_active"] == "0.001"
    assert cells["probe_miss"].startswith("0.11177")
    assert cells["conflict_bound"].startswith("0.11266")
    assert cells["load_ff_act"] == "0.18"
    assert cells["load_ff_3t"] == "0.21"
    assert cells["load_fail_act"] == "0.49"
    assert cells["load_fail_3t"] == "0.31"


def test_analyze_epsilon_solver(capsys):
    code, out, _ = run_cli(capsys, "analyze", "--n", "100", "--t", "10",
                           "--epsilon", "0.001")
    assert code == 0
    line = next(l for l in out.splitlines() if l.startswith("epsilon"))
    cells = line.split(",")
    assert float(cells[-1]) <= 0.001


def test_analyze_rejects_bad_params(capsys):
    code, _, err = run_cli(capsys, "analyze", "--n", "3", "--t", "2")
    assert code == 1 and "t" in err


def test_montecarlo_pass(capsys):
    code, out, _ = run_cli(capsys, "montecarlo", "--protocol", "act",
                           "--n", "31", "--t", "10", "--kappa", "3",
                           "--delta", "5", "--adversary", "regime-split",
                           "--seed", "50", "--trials", "150")
    assert code == 0
    assert ",PASS" in out


def test_montecarlo_insufficient_trials_warns(capsys):
    code, out, err = run_cli(capsys, "montecarlo", "--protocol", "act",
                             "--n", "31", "--t", "10", "--kappa", "3",
                             "--delta", "5", "--adversary", "regime-split",
                             "--seed", "50", "--trials", "10")
    assert "insufficient trials" in err


def test_montecarlo_no_adversary_estimates_zero(capsys):
    code, out, _ = run_cli(capsys, "montecarlo", "--protocol", "act",
                           "--n", "13", "--t", "4", "--kappa", "2",
                           "--delta", "3", "--seed", "1", "--trials", "20")
    assert code == 0
    row = out.strip().splitlines()[-1]
    assert row.split(",")[3] == "0"


def test_sweep_monotone_surface(capsys):
    code, out, _ = run_cli(capsys, "sweep", "--grid", "kappa=1..4,delta=1..6",
                           "--n", "100", "--t", "10")
    assert code == 0
    lines = out.strip().splitlines()
    header = lines[0].split(",")
    idx = {name: header.index(name) for name in ("kappa", "delta",
                                                 "conflict_bound")}
    rows = [l.split(",") for l in lines[1:]]
    assert len(rows) == 24
    table = {(int(r[idx["kappa"]]), int(r[idx["delta"]])):
             float(r[idx["conflict_bound"]]) for r in rows}
    for (k, d), v in table.items():
        if (k + 1, d) in table:
            assert table[(k + 1, d)] < v
        if (k, d + 1) in table:
            assert table[(k, d + 1)] < v


def test_sweep_with_montecarlo_stays_below_bounds(capsys):
    code, out, _ = run_cli(capsys, "sweep", "--grid", "delta=4..5",
                           "--n", "31", "--t", "10", "--kappa", "3",
                           "--seed", "11", "--montecarlo", "--trials", "120")
    assert code == 0
    lines = out.strip().splitlines()
    header = lines[0].split(",")
    est, bound = header.index("estimate"), header.index("conflict_bound")
    for row in lines[1:]:
        cells = row.split(",")
        assert cells[-1] == "PASS"
        assert float(cells[est]) <= float(cells[bound]) + 0.2  # CI slack
    assert len(lines) == 3


def test_sweep_empty_grid_header_only(capsys):
    code, out, _ = run_cli(capsys, "sweep", "--grid", "")
    assert code == 0
    assert out.strip().splitlines() == [out.strip().splitlines()[0]]


def test_sweep_malformed_grid(capsys):
    code, _, err = run_cli(capsys, "sweep", "--grid", "kappa=banana")
    assert code == 1 and "grid" in err


def test_trace_check_roundtrip(capsys, tmp_path):
    trace = tmp_path / "clean.trace"
    run_cli(capsys, "simulate", "--protocol", "e", "--n", "4", "--t", "1",
            "--seed", "0", "--trace-out", str(trace))
    code, out, _ = run_cli(capsys, "trace-check", str(trace))
    assert code == 0 and "trace clean" in out


def test_trace_check_flags_corruption(capsys, tmp_path):
    trace = tmp_path / "bad.trace"
    run_cli(capsys, "simulate", "--protocol", "e", "--n", "4", "--t", "1",
            "--seed", "0", "--trace-out", str(trace))
    lines = trace.read_text().splitlines()
    dup = next(l for l in lines if l.split(" ")[1] == "appdlv")
    trace.write_text("\n".join(lines + [dup]) + "\n")
    code, _, err = run_cli(capsys, "trace-check", str(trace))
    assert code == 2 and "Integrity" in err


def test_trace_check_parse_error(capsys, tmp_path):
    bad = tmp_path / "junk.trace"
    bad.write_text("garbage\n")
    code, _, err = run_cli(capsys, "trace-check", str(bad))
    assert code == 1 and "parse error" in err


def test_config_file_flags_override(capsys, tmp_path):
    cfgfile = tmp_path / "run.conf"
    cfgfile.write_text("protocol = 3t\nn = 13\nt = 4\nseed = 5\n# comment\n")
    code, out, _ = run_cli(capsys, "simulate", "--config", str(cfgfile),
                           "--seed", "9")
    assert code == 0
    assert "protocol=3t" in out and "seed=9" in out


def test_module_entrypoint_subprocess():
    proc = subprocess.run(
        [sys.executable, "-m", "securecast.cli", "analyze", "--n", "31",
         "--t", "10", "--kappa", "3", "--delta", "5"],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "conflict_bound" in proc.stdout
