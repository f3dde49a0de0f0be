import json
import math
import os
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

from conftest import accept_closed_form, assert_within_sigmas, binomial_sigma, rb_closed_form
from subspace_qkd import __version__
from subspace_qkd.cli import main
from subspace_qkd.config import parse_config
from subspace_qkd.harness import (
    CSV_HEADER,
    SweepSpec,
    report_json,
    reports_csv,
    row_seed,
    run_experiment,
    run_sweep,
)

DATA = Path(__file__).parent / "data"
GOLDEN_CONFIG = DATA / "golden_config.yaml"
GOLDEN_REPORT = DATA / "golden_report.json"

BASE = "protocol: protocol2\nn_codes: {n}\nseed: {seed}\n"


def golden_text() -> str:
    cfg = replace(parse_config(GOLDEN_CONFIG.read_text()), output_path=None)
    return report_json(run_experiment(cfg))


def test_golden_report():
    if os.environ.get("UPDATE_GOLDEN"):
        GOLDEN_REPORT.write_text(golden_text())
    assert golden_text() == GOLDEN_REPORT.read_text()


def test_report_schema():
    doc = json.loads(GOLDEN_REPORT.read_text())
    for key in ("config", "seed", "counts", "estimate", "key_rate", "raw_key", "final_key", "aborted"):
        assert key in doc
    for key in ("sent", "delivered", "basis_matched", "accepted"):
        assert key in doc["counts"]
    for key in ("r_b", "r_b_se", "t_p", "t_p_se", "t_minus", "t_plus",
                "eps_x", "eps_y", "eps_z", "epsp_x", "epsp_y", "epsp_z"):
        assert key in doc["estimate"]
    for key in ("rate_per_accepted_bit", "rate_per_sent_code", "no_key"):
        assert key in doc["key_rate"]
    assert doc["config"]["seed"] == doc["seed"]


def test_identity_run_report():
    r = run_experiment(parse_config(BASE.format(n=1000, seed=3)))
    assert r.estimate.r_b == 0 and r.estimate.t_p == 0
    assert r.key.rate_per_accepted_bit == 1.0
    assert len(r.final_key) == len(r.alice_key) and not r.aborted


def test_pi_over_6_run():
    cfg = parse_config(BASE.format(n=200_000, seed=5) + "channel: {rotation: {theta: 0.5235987755982988}}\n")
    r = run_experiment(cfg)
    rb = rb_closed_form(math.pi / 6)
    assert_within_sigmas(r.estimate.r_b, rb, binomial_sigma(rb, r.estimate.counts["z_n"]))


def test_same_seed_identical_files(tmp_path):
    cfg = parse_config(GOLDEN_CONFIG.read_text())
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run_experiment(replace(cfg, output_path=str(a)))
    run_experiment(replace(cfg, output_path=str(b)))
    assert a.read_bytes().replace(b"a.json", b"X") == b.read_bytes().replace(b"b.json", b"X")


def test_eve_aborts():
    r = run_experiment(parse_config(BASE.format(n=20_000, seed=1) + "channel: {eve: intercept_resend_z}\n"))
    assert r.aborted and len(r.final_key) == 0


def test_block_inversion_recovers_flipped_key():
    # theta near pi/2 makes almost every accepted Z bit flip
    cfg = parse_config(BASE.format(n=60_000, seed=2) + "block_size: 500\nchannel: {rotation: {theta: 1.3}}\n")
    r = run_experiment(cfg)
    assert r.estimate.r_b > 0.9
    assert r.extra["block_inversion"]["flipped"] == r.extra["block_inversion"]["blocks"]
    assert r.extra["residual_qber"] < 0.1
    assert r.key.rate_per_accepted_bit > 0


def test_sweep_rows():
    base = parse_config(BASE.format(n=50_000, seed=4))
    reports = run_sweep(SweepSpec(base, (0.0, math.pi / 4)))
    assert reports[0].estimate.r_b == 0 and reports[0].accepted_fraction_z == 1.0
    r = reports[1]
    assert_within_sigmas(r.accepted_fraction_z, 0.5, binomial_sigma(0.5, r.counts["z_basis_matched"]))
    assert_within_sigmas(r.estimate.r_b, 0.5, binomial_sigma(0.5, r.estimate.counts["z_n"]))
    assert r.aborted  # no psi+ code survives post-selection at pi/4


def test_sweep_closed_forms():
    thetas = (0.1, 0.3, 0.5236, 0.7)
    reports = run_sweep(SweepSpec(parse_config(BASE.format(n=200_000, seed=8)), thetas), jobs=2)
    for theta, r in zip(thetas, reports):
        rb, pa = rb_closed_form(theta), accept_closed_form(theta)
        assert r.theta == theta
        assert_within_sigmas(r.estimate.r_b, rb, binomial_sigma(rb, r.estimate.counts["z_n"]))
        assert_within_sigmas(r.accepted_fraction_z, pa, binomial_sigma(pa, r.counts["z_basis_matched"]))


def test_sweep_seeds_follow_position():
    base = parse_config(BASE.format(n=3000, seed=4))
    a = run_sweep(SweepSpec(base, (0.2, 0.4)))
    b = run_sweep(SweepSpec(base, (0.2, 0.4)))
    assert reports_csv(a) == reports_csv(b)
    assert a[0].seed == row_seed(4, 0) != a[1].seed == row_seed(4, 1)
    with pytest.raises(ValueError):
        SweepSpec(base, ())


def test_csv_header():
    r = run_experiment(parse_config(BASE.format(n=1000, seed=3)))
    assert reports_csv([r]).splitlines()[0] == ",".join(CSV_HEADER)
    assert CSV_HEADER == ("theta", "sent", "delivered", "accepted", "r_b", "r_b_se", "t_p", "t_p_se", "key_rate")


# -- CLI ---------------------------------------------------------------------

@pytest.fixture
def cli():
    return CliRunner()


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_cli_version(cli):
    res = cli.invoke(main, ["--version"])
    assert res.exit_code == 0 and __version__ in res.output


def test_cli_simulate_structured(cli, tmp_path):
    path = _write(tmp_path, BASE.format(n=2000, seed=1))
    res = cli.invoke(main, ["simulate", "--config", path, "--seed", "9"])
    assert res.exit_code == 0
    assert json.loads(res.output)["seed"] == 9


def test_cli_simulate_csv_file(cli, tmp_path):
    path = _write(tmp_path, BASE.format(n=2000, seed=1))
    out = tmp_path / "r.csv"
    res = cli.invoke(main, ["simulate", "--config", path, "--out", str(out), "--format", "csv"])
    assert res.exit_code == 0 and res.output == ""
    assert out.read_text().splitlines()[0] == ",".join(CSV_HEADER)


def test_cli_byte_identical(cli, tmp_path):
    path = _write(tmp_path, BASE.format(n=5000, seed=1) + "channel: {rotation: {theta: 0.4}}\n")
    outs = []
    for name in ("x.json", "y.json"):
        out = tmp_path / name
        assert cli.invoke(main, ["simulate", "--config", path, "--out", str(out)]).exit_code == 0
        outs.append(out.read_bytes().replace(name.encode(), b"OUT"))
    assert outs[0] == outs[1]


@pytest.mark.parametrize("text", [
    "protocol: six_state\nn_codes: 1\nseed: 1\n",
    "protocol: protocol2\nn_codes: 1\nseed: 1\nchannel: {loss_prob: 1.5}\n",
    "protocol: [oops\n",
])
def test_cli_config_errors_exit_2(cli, tmp_path, text):
    res = cli.invoke(main, ["simulate", "--config", _write(tmp_path, text)])
    assert res.exit_code == 2


def test_cli_missing_file_exit_2(cli, tmp_path):
    assert cli.invoke(main, ["simulate", "--config", str(tmp_path / "nope.yaml")]).exit_code == 2


def test_cli_insufficient_data_exit_3(cli, tmp_path):
    res = cli.invoke(main, ["simulate", "--config", _write(tmp_path, BASE.format(n=5, seed=1))])
    assert res.exit_code == 3
    assert "insufficient data" in res.output


def test_cli_sweep(cli, tmp_path):
    path = _write(tmp_path, BASE.format(n=5000, seed=1))
    res = cli.invoke(main, ["sweep", "--config", path, "--theta", "0,0.3"])
    assert res.exit_code == 0
    lines = res.output.splitlines()
    assert lines[0] == ",".join(CSV_HEADER) and len(lines) == 3
    assert lines[1].startswith("0.0,")


def test_cli_sweep_bad_theta(cli, tmp_path):
    path = _write(tmp_path, BASE.format(n=5000, seed=1))
    assert cli.invoke(main, ["sweep", "--config", path, "--theta", "a,b"]).exit_code == 2
