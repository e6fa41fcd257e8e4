"""CLI subcommands: pipeline smoke, determinism, exit codes."""

import json

import numpy as np
import pytest

from pohmm.cli import main

from synthetic import synthetic_population_samples


@pytest.fixture
def keystroke_csv(tmp_path):
    """Small two-user dataset written in the canonical CSV format."""
    from pohmm.dataset import save_csv, synthesize_events

    samples, _ = synthetic_population_samples(seed=5, n_users=2, samples_per_user=3, length=25)
    events = []
    for user_samples in samples.values():
        for seq in user_samples:
            events.extend(synthesize_events(seq))
    path = tmp_path / "keystrokes.csv"
    save_csv(events, path)
    return path


def test_fit_loglik_states_pipeline(tmp_path, keystroke_csv):
    model = tmp_path / "model.json"
    rc = main(["fit", "--input", str(keystroke_csv), "--model-out", str(model),
               "--states", "2", "--emission", "lognormal", "--epsilon", "1e-6",
               "--max-iter", "200"])
    assert rc == 0
    assert model.exists() and (tmp_path / "model.json.report.json").exists()
    report = json.loads((tmp_path / "model.json.report.json").read_text())
    trace = report["loglik_trace"]
    assert all(b - a >= -1e-8 for a, b in zip(trace, trace[1:]))

    ll_csv = tmp_path / "loglik.csv"
    rc = main(["loglik", "--model", str(model), "--input", str(keystroke_csv),
               "--output", str(ll_csv)])
    assert rc == 0
    lines = ll_csv.read_text().strip().splitlines()
    assert lines[0] == "user,session,n,loglik"
    assert len(lines) == 7  # 2 users x 3 sessions + header

    st_csv = tmp_path / "states.csv"
    rc = main(["states", "--model", str(model), "--input", str(keystroke_csv),
               "--output", str(st_csv)])
    assert rc == 0
    states = {int(line.split(",")[4]) for line in st_csv.read_text().strip().splitlines()[1:]}
    assert states <= {0, 1}


def test_sample_then_fit_then_loglik(tmp_path, keystroke_csv):
    model = tmp_path / "model.json"
    main(["fit", "--input", str(keystroke_csv), "--model-out", str(model), "--max-iter", "100"])
    synth = tmp_path / "synth.csv"
    rc = main(["sample", "--model", str(model), "--samples", "3", "--length", "30",
               "--seed", "7", "--output", str(synth)])
    assert rc == 0
    model2 = tmp_path / "model2.json"
    rc = main(["fit", "--input", str(synth), "--model-out", str(model2), "--max-iter", "100"])
    assert rc == 0
    out = tmp_path / "ll2.csv"
    rc = main(["loglik", "--model", str(model2), "--input", str(synth), "--output", str(out)])
    assert rc == 0


def test_seed_determinism_byte_identical(tmp_path, keystroke_csv):
    model = tmp_path / "model.json"
    main(["fit", "--input", str(keystroke_csv), "--model-out", str(model), "--max-iter", "100"])
    outs = []
    for name in ("a.csv", "b.csv"):
        out = tmp_path / name
        main(["sample", "--model", str(model), "--samples", "2", "--length", "20",
              "--seed", "123", "--output", str(out)])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]

    gofs = []
    for name in ("g1.json", "g2.json"):
        out = tmp_path / name
        rc = main(["gof", "--input", str(keystroke_csv), "--surrogates", "3",
                   "--seed", "11", "--max-iter", "60", "--output", str(out)])
        assert rc == 0
        gofs.append(out.read_bytes())
    assert gofs[0] == gofs[1]


def test_gof_output_record(tmp_path, keystroke_csv):
    out = tmp_path / "gof.json"
    rc = main(["gof", "--input", str(keystroke_csv), "--user", "u01", "--surrogates", "3",
               "--seed", "1", "--max-iter", "60", "--output", str(out)])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert set(doc) >= {"A", "S", "p_value", "A_surrogates"}
    assert doc["S"] == 3 and len(doc["A_surrogates"]) == 3
    assert 0 < doc["p_value"] <= 1


def test_simulate_csv(tmp_path):
    out = tmp_path / "sim.csv"
    rc = main(["simulate", "--scenario", "1", "--n-grid", "64", "--replicates", "3",
               "--seed", "5", "--output", str(out)])
    assert rc == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "scenario,N,group,parameter,mean_residual,stderr,accuracy"
    assert len(lines) > 10


def test_benchmark_outputs(tmp_path, keystroke_csv):
    outdir = tmp_path / "bench"
    rc = main(["benchmark", "--input", str(keystroke_csv), "--outdir", str(outdir),
               "--max-iter", "60", "--window", "10"])
    assert rc == 0
    for name in ("summary.csv", "roc.csv", "amrt.csv", "per_user.json"):
        assert (outdir / name).exists()
    summary = (outdir / "summary.csv").read_text().splitlines()
    assert summary[0].startswith("detector,acc")
    assert {row.split(",")[0] for row in summary[1:]} >= {"pohmm", "hmm"}


def test_exit_codes(tmp_path, keystroke_csv):
    # unknown flag -> argparse exits 2
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--bogus"])
    assert exc.value.code == 2
    # missing file -> input error
    rc = main(["fit", "--input", str(tmp_path / "nope.csv"), "--model-out", str(tmp_path / "m.json")])
    assert rc == 2
    # truncation to 1 keystroke leaves nothing usable
    rc = main(["fit", "--input", str(keystroke_csv), "--model-out", str(tmp_path / "m.json"),
               "--truncate", "1"])
    assert rc == 2
