"""End-to-end tests of the command-line interface."""

import json

import numpy as np
import pandas as pd
import pytest

from online_portfolio.cli import main

SYNTH_TOML = """
seed = 3

[synth]
n_assets = 12
n_periods = 120

[hyperparams]
burn_in = 20
universe_size = 12
gamma_s = 10.0
gamma_a = 10.0
"""


def _write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _only_dir(root):
    dirs = [p for p in root.iterdir() if p.is_dir()]
    assert len(dirs) == 1
    return dirs[0]


def test_backtest_writes_reproducible_artifacts(tmp_path):
    config = _write(tmp_path, SYNTH_TOML)
    out = tmp_path / "out"
    assert main(["backtest", "--config", config, "--out", str(out)]) == 0

    run_dir = _only_dir(out)
    for name in ("equity_curve.csv", "components.csv", "weights.csv", "stats.json"):
        assert (run_dir / name).exists()
    first = (run_dir / "stats.json").read_text()
    assert json.loads(first)['config_digest'] == run_dir.name

    assert main(["backtest", "--config", config, "--out", str(out)]) == 0
    assert (run_dir / "stats.json").read_text() == first


def test_seed_override_gets_its_own_directory(tmp_path):
    config = _write(tmp_path, SYNTH_TOML)
    out = tmp_path / "out"
    assert main(["generate", "--config", config, "--out", str(out)]) == 0
    assert main(["generate", "--config", config, "--out", str(out), "--seed", "4"]) == 0
    assert len([p for p in out.iterdir() if p.is_dir()]) == 2


def test_generate_then_ingest(tmp_path):
    out = tmp_path / "out"
    assert main(["generate", "--config", _write(tmp_path, SYNTH_TOML), "--out", str(out)]) == 0
    panel_dir = _only_dir(out) / "panel"
    assert (panel_dir.parent / "truth.json").exists()

    data_toml = f"""
[data]
prices = "{panel_dir / 'prices.csv'}"
characteristics = "{panel_dir / 'characteristics.csv'}"
rf = "{panel_dir / 'rf.csv'}"
"""
    ingest_out = tmp_path / "ingest"
    assert main(["ingest", "--config", _write(tmp_path, data_toml, "data.toml"), "--out", str(ingest_out)]) == 0
    summary = json.loads((_only_dir(ingest_out) / "panel_summary.json").read_text())
    assert summary['periods'] == 120
    assert summary['assets'] == 12
    factors = pd.read_csv(_only_dir(ingest_out) / "factors.csv", index_col='date')
    assert list(factors.columns) == ['SMB', 'HML']


def test_missing_data_file_exits_with_data_code(tmp_path, capsys):
    missing = tmp_path / "nowhere" / "prices.csv"
    data_toml = f"""
[data]
prices = "{missing}"
characteristics = "{tmp_path / 'chars.csv'}"
rf = "{tmp_path / 'rf.csv'}"
"""
    (tmp_path / "rf.csv").write_text("date,rf\n2000-01-07,0.0005\n2000-01-14,0.0005\n")
    code = main(["backtest", "--config", _write(tmp_path, data_toml), "--out", str(tmp_path / "out")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_unknown_config_key_exits_with_usage_code(tmp_path, capsys):
    config = _write(tmp_path, SYNTH_TOML.replace("burn_in = 20", "burnin = 20"))
    assert main(["backtest", "--config", config, "--out", str(tmp_path / "out")]) == 1
    assert "burnin" in capsys.readouterr().err


def test_calibrate_single_configuration(tmp_path):
    config = _write(tmp_path, SYNTH_TOML + "\n[grid]\n")
    out = tmp_path / "out"
    assert main(["calibrate", "--config", config, "--out", str(out)]) == 0
    run_dir = _only_dir(out)
    report = json.loads((run_dir / "report.json").read_text())
    assert report['n_trials'] == 1
    assert report['pbo'] == 0.5 and report['pbo_degenerate'] is True
    assert "\\begin{tabular}" in (run_dir / "table.tex").read_text()
    assert len(pd.read_csv(run_dir / "table.csv")) == 6


def test_calibrate_requires_grid(tmp_path):
    assert main(["calibrate", "--config", _write(tmp_path, SYNTH_TOML), "--out", str(tmp_path / "out")]) == 1


def test_evaluate_and_pbo_on_csv(tmp_path):
    rng = np.random.default_rng(0)
    frame = pd.DataFrame(rng.normal(0.001, 0.02, size=(200, 6)),
                         columns=[f"trial_{j}" for j in range(6)],
                         index=pd.Index(range(200), name='period'))
    returns = tmp_path / "returns.csv"
    frame.to_csv(returns)

    out = tmp_path / "eval"
    assert main(["evaluate", "--returns", str(returns), "--trials", "100", "--out", str(out)]) == 0
    evaluation = json.loads((_only_dir(out) / "evaluation.json").read_text())
    assert evaluation['n_trials'] == 100
    assert set(evaluation['columns']) == set(frame.columns)
    for entry in evaluation['columns'].values():
        assert entry['dsr'] <= entry['psr']

    out = tmp_path / "pbo"
    assert main(["pbo", "--returns", str(returns), "--blocks", "8", "--out", str(out)]) == 0
    pbo = json.loads((_only_dir(out) / "pbo.json").read_text())
    assert 0.0 <= pbo['pbo'] <= 1.0
    assert pbo['n_combinations'] == 70
    assert len(pd.read_csv(_only_dir(out) / "logits.csv")) == 70


def test_odd_block_count_exits_with_usage_code(tmp_path):
    returns = tmp_path / "returns.csv"
    pd.DataFrame(np.random.default_rng(1).normal(size=(40, 3))).to_csv(returns)
    assert main(["pbo", "--returns", str(returns), "--blocks", "7", "--out", str(tmp_path / "out")]) == 1


def test_missing_subcommand():
    with pytest.raises(SystemExit) as excinfo:
        main([])
    assert excinfo.value.code == 1
