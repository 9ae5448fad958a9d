"""Configuration parsing, result records, experiment runner, and CLI."""

import json
import math
import os

import numpy as np
import pytest

from mvsde import ConfigError, InvalidArgumentError
from mvsde.experiments.cli import main
from mvsde.experiments.config import (
    EXPERIMENT_DEFAULTS,
    EXPERIMENT_INFO,
    build_diffusion,
    build_drift,
    build_initial_windows,
    build_operator,
    load_config,
    parse_config_text,
    render_config,
)
from mvsde.experiments.records import (
    ResultRecord,
    check_record,
    emit_outputs,
    info_record,
    read_results_jsonl,
    record_to_json,
)
from mvsde.experiments.runner import EXPERIMENTS, run_experiment
from mvsde.monotone import Graph1D, NormalCone, ZeroOperator


def minimal(name: str, extra: str = "") -> str:
    return f"[experiment]\nname = {name}\n{extra}"


# ---------------------------------------------------------------------------
# Parsing and defaults
# ---------------------------------------------------------------------------


def test_minimal_config_resolves_experiment_defaults():
    cfg = parse_config_text(minimal("picard_contraction"))
    assert cfg.name == "picard_contraction"
    assert cfg.grid.dt == 1e-3
    assert cfg.grid.delay == 0.02
    assert cfg.grid.horizon == 0.02
    assert cfg.paths == 1000
    assert cfg.iterations == 8
    assert cfg.seed == 20260816
    assert cfg.threads == 1
    assert cfg.scheme == "resolvent_step"
    assert cfg.drift_name == "linear_delay"
    assert cfg.drift_params == {"pull": 1.0, "push": 0.5}
    assert cfg.diffusion_name == "constant"
    assert cfg.diffusion_params == {"value": 0.5}
    assert cfg.output_dir is None


def test_every_experiment_parses_from_name_alone():
    assert set(EXPERIMENT_DEFAULTS) == set(EXPERIMENT_INFO) == set(EXPERIMENTS)
    assert len(EXPERIMENTS) == 7
    for name in EXPERIMENT_DEFAULTS:
        cfg = parse_config_text(minimal(name))
        assert cfg.name == name
        assert cfg.grid.horizon > 0.0


def test_explicit_keys_override_defaults():
    text = minimal(
        "picard_contraction",
        "[run]\npaths = 32\nseed = 7\n[grid]\ndt = 0.002\n",
    )
    cfg = parse_config_text(text)
    assert cfg.paths == 32
    assert cfg.seed == 7
    assert cfg.grid.dt == 0.002


def test_overrides_argument_wins_over_file():
    cfg = parse_config_text(
        minimal("picard_contraction", "[run]\nseed = 7\n"),
        overrides={"run.seed": "99", "run.threads": "2"},
    )
    assert cfg.seed == 99
    assert cfg.threads == 2


def test_inline_comments_are_stripped():
    cfg = parse_config_text(
        minimal("picard_contraction", "[run]\npaths = 32  # small smoke run\n")
    )
    assert cfg.paths == 32


def test_missing_name_rejected():
    with pytest.raises(ConfigError, match="missing required key"):
        parse_config_text("[grid]\ndt = 0.01\n")


def test_unknown_experiment_lists_known_names():
    with pytest.raises(ConfigError, match="unknown experiment 'warp_drive'"):
        parse_config_text(minimal("warp_drive"))
    try:
        parse_config_text(minimal("warp_drive"))
    except ConfigError as exc:
        for name in EXPERIMENT_DEFAULTS:
            assert name in str(exc)


def test_unknown_key_names_section_and_key():
    with pytest.raises(ConfigError, match=r"unknown config key '\[run\] banana'"):
        parse_config_text(minimal("picard_contraction", "[run]\nbanana = 3\n"))


def test_value_type_errors_are_config_errors():
    with pytest.raises(ConfigError, match="not a valid int"):
        parse_config_text(minimal("picard_contraction", "[run]\npaths = many\n"))
    with pytest.raises(ConfigError, match="not a valid float"):
        parse_config_text(minimal("picard_contraction", "[grid]\ndt = tiny\n"))


def test_run_section_bounds():
    with pytest.raises(ConfigError, match=r"'\[run\] paths' must be a positive integer"):
        parse_config_text(minimal("picard_contraction", "[run]\npaths = 0\n"))
    with pytest.raises(ConfigError, match=r"'\[run\] particles'"):
        parse_config_text(minimal("distribution_iteration", "[run]\nparticles = -4\n"))
    with pytest.raises(ConfigError, match=r"'\[run\] seed' must be an unsigned 64-bit"):
        parse_config_text(minimal("picard_contraction", "[run]\nseed = -1\n"))
    with pytest.raises(ConfigError, match=r"'\[run\] threads'"):
        parse_config_text(minimal("picard_contraction", "[run]\nthreads = 0\n"))
    with pytest.raises(ConfigError, match=r"'\[run\] deltas' must be positive"):
        parse_config_text(minimal("continuity", "[run]\ndeltas = 0.1, 0.0\n"))


def test_grid_errors_surface_as_config_errors():
    with pytest.raises(ConfigError, match="dt"):
        parse_config_text(minimal("picard_contraction", "[grid]\ndt = -0.01\n"))
    with pytest.raises(ConfigError):
        parse_config_text(
            minimal("picard_contraction", "[grid]\ndt = 0.3\nr0 = 0.5\nhorizon = 0.9\n")
        )


def test_solver_section_validation():
    with pytest.raises(ConfigError, match="unknown solver scheme 'leapfrog'"):
        parse_config_text(minimal("picard_contraction", "[solver]\nscheme = leapfrog\n"))
    with pytest.raises(ConfigError, match="membership_tol"):
        parse_config_text(
            minimal("picard_contraction", "[solver]\nmembership_tol = 0\n")
        )


def test_operator_and_initial_validation():
    with pytest.raises(ConfigError, match="unknown operator kind"):
        parse_config_text(minimal("picard_contraction", "[operator]\nkind = torus\n"))
    with pytest.raises(ConfigError, match="missing parameter"):
        parse_config_text(minimal("picard_contraction", "[operator]\nkind = ball\n"))
    with pytest.raises(ConfigError, match="unknown initial kind"):
        parse_config_text(minimal("picard_contraction", "[initial]\nkind = cauchy\n"))


def test_coefficient_validation():
    with pytest.raises(ConfigError, match="unknown drift coefficient 'warp'"):
        parse_config_text(
            minimal("picard_contraction", "[coefficients]\ndrift = warp\n")
        )
    with pytest.raises(ConfigError, match="unknown diffusion coefficient"):
        parse_config_text(
            minimal("picard_contraction", "[coefficients]\ndiffusion = warp\n")
        )
    with pytest.raises(ConfigError, match="unknown parameter 'wobble'"):
        parse_config_text(
            minimal("picard_contraction", "[coefficients]\ndrift.wobble = 1\n")
        )


def test_malformed_text_reported():
    with pytest.raises(ConfigError, match="malformed configuration"):
        parse_config_text("not an ini file at all\n")


def test_load_config_reads_files(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(minimal("picard_contraction", "[run]\npaths = 16\n"))
    cfg = load_config(path)
    assert cfg.paths == 16
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.cfg")


# ---------------------------------------------------------------------------
# Rendering round-trip
# ---------------------------------------------------------------------------


def test_render_parse_round_trip_for_every_experiment():
    for name in EXPERIMENT_DEFAULTS:
        cfg = parse_config_text(minimal(name))
        text = render_config(cfg)
        again = parse_config_text(text)
        assert again.resolved == cfg.resolved
        assert render_config(again) == text


def test_render_round_trip_preserves_overrides():
    cfg = parse_config_text(
        minimal("uniqueness", "[run]\nseed = 31337\npaths = 12\n[grid]\ndt = 0.01\n")
    )
    again = parse_config_text(render_config(cfg))
    assert again.seed == 31337
    assert again.paths == 12
    assert again.grid.dt == 0.01
    assert again.resolved == cfg.resolved


def test_render_sections_are_ordered():
    text = render_config(parse_config_text(minimal("continuity")))
    headers = [line for line in text.splitlines() if line.startswith("[")]
    assert headers == [
        "[experiment]",
        "[grid]",
        "[run]",
        "[solver]",
        "[operator]",
        "[initial]",
        "[coefficients]",
    ]


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------


def test_build_operator_kinds():
    cfg = parse_config_text(minimal("reflected_bm_oracle"))
    op = build_operator(cfg)
    assert isinstance(op, NormalCone)
    assert op.dim == 1

    cfg = parse_config_text(minimal("delay_mean_oracle"))
    assert isinstance(build_operator(cfg), ZeroOperator)

    cfg = parse_config_text(
        minimal("picard_contraction", "[operator]\nkind = sign_graph\n")
    )
    assert isinstance(build_operator(cfg), Graph1D)

    cfg = parse_config_text(
        minimal(
            "picard_contraction",
            "[operator]\nkind = box\nlower = 0, 0\nupper = 1, 2\n"
            "[initial]\nvalue = 0.5, 0.5\n",
        )
    )
    assert build_operator(cfg).dim == 2


def test_build_operator_invalid_parameters():
    cfg = parse_config_text(
        minimal("picard_contraction", "[operator]\nkind = ball\ncenter = 0\nradius = -1\n")
    )
    with pytest.raises(ConfigError, match="invalid operator parameters"):
        build_operator(cfg)


def test_build_initial_windows_constant_and_projected():
    cfg = parse_config_text(minimal("uniqueness"))  # halfline at 0, value 1.0
    xi = build_initial_windows(cfg, 5)
    assert xi.shape == (5, cfg.grid.window_len, 1)
    assert np.all(xi == 1.0)

    # a constant level outside the constraint set is projected onto it
    cfg = parse_config_text(minimal("uniqueness", "[initial]\nvalue = -2.0\n"))
    assert np.all(build_initial_windows(cfg, 3) == 0.0)


def test_build_initial_windows_gaussian_deterministic():
    cfg = parse_config_text(minimal("distribution_iteration"))
    a = build_initial_windows(cfg, 64)
    b = build_initial_windows(cfg, 64)
    assert np.array_equal(a, b)
    # constant in time along the window axis
    assert np.array_equal(a[:, 0, :], a[:, -1, :])
    assert a.std() > 0.0

    other = parse_config_text(minimal("distribution_iteration", "[run]\nseed = 2\n"))
    assert not np.array_equal(build_initial_windows(other, 64), a)


def test_build_initial_dimension_mismatch():
    cfg = parse_config_text(
        minimal(
            "picard_contraction",
            "[operator]\nkind = box\nlower = 0, 0\nupper = 1, 1\n"
            "[initial]\nvalue = 0.5, 0.5, 0.5\n",
        )
    )
    with pytest.raises(ConfigError, match="dimension"):
        build_initial_windows(cfg, 2)


def test_build_coefficients_match_config():
    cfg = parse_config_text(minimal("continuity"))
    f = build_drift(cfg)
    g = build_diffusion(cfg)
    assert f.dim == 1 and g.width == 1
    assert math.isfinite(float(f.bound))

    mf = parse_config_text(minimal("delay_mean_oracle"))
    from mvsde.coefficients import MeanFieldCoefficient

    assert isinstance(build_drift(mf), MeanFieldCoefficient)
    assert isinstance(build_diffusion(mf), MeanFieldCoefficient)


# ---------------------------------------------------------------------------
# Result records
# ---------------------------------------------------------------------------


def test_check_record_pass_and_fail():
    ok = check_record("exp", "m", 1.005, 1.0, 0.01)
    assert ok.passed is True
    bad = check_record("exp", "m", 1.05, 1.0, 0.01)
    assert bad.passed is False
    edge = check_record("exp", "m", 1.25, 1.0, 0.25)
    assert edge.passed is True  # the tolerance bound is inclusive


def test_info_record_always_passes():
    rec = info_record("exp", "m", 3.5, std_error=0.1)
    assert rec.passed is True
    assert math.isinf(rec.tolerance)


def test_inconsistent_record_rejected():
    with pytest.raises(InvalidArgumentError):
        ResultRecord(
            experiment="exp",
            metric="m",
            value=2.0,
            std_error=0.0,
            target=1.0,
            tolerance=0.1,
            passed=True,
        )


def test_record_json_round_trip():
    rec = check_record("exp", "gap", 0.25, 0.2, 0.1, std_error=0.01)
    line = record_to_json(rec)
    payload = json.loads(line)
    assert list(payload) == sorted(payload)
    assert "wall_seconds" not in payload
    assert payload["passed"] is True


def test_info_record_serialises_tolerance_as_null():
    line = record_to_json(info_record("exp", "m", 1.0))
    assert json.loads(line)["tolerance"] is None


def test_read_results_round_trip_ignores_wall_time(tmp_path):
    records = [
        check_record("exp", "a", 1.0, 1.0, 0.5, std_error=0.1),
        info_record("exp", "b", -2.5),
    ]
    records[0].wall_seconds = 9.0
    paths = emit_outputs(records, str(tmp_path))
    loaded = read_results_jsonl(paths["results"])
    assert loaded == records  # wall_seconds excluded from equality
    assert all(rec.wall_seconds == 0.0 for rec in loaded)


def test_emit_outputs_files(tmp_path):
    records = [info_record("exp", "m", 1.0)]
    paths = emit_outputs(records, str(tmp_path), config_text="[experiment]\nname = x\n")
    assert os.path.basename(paths["results"]) == "results.jsonl"
    with open(paths["results"]) as fh:
        assert len(fh.readlines()) == 1
    with open(paths["manifest"]) as fh:
        assert fh.read() == "[experiment]\nname = x\n"
    with open(paths["timings"]) as fh:
        assert "exp/m:" in fh.read()


def test_emit_outputs_empty_record_list(tmp_path):
    paths = emit_outputs([], str(tmp_path))
    with open(paths["results"]) as fh:
        assert fh.read() == ""
    assert read_results_jsonl(paths["results"]) == []


# ---------------------------------------------------------------------------
# Runner
# ---------------------------------------------------------------------------

FAST_PICARD = minimal(
    "picard_contraction", "[run]\npaths = 64\niterations = 4\n[grid]\ndt = 0.002\n"
)


def test_run_experiment_is_deterministic_in_process():
    cfg = parse_config_text(FAST_PICARD)
    first = run_experiment(cfg)
    second = run_experiment(cfg)
    assert first == second  # wall_seconds is excluded from comparison
    assert [r.experiment for r in first] == ["picard_contraction"] * len(first)


def test_run_experiment_thread_count_does_not_change_records():
    base = parse_config_text(
        minimal("reflected_bm_oracle", "[run]\npaths = 10240\n[grid]\ndt = 0.01\n")
    )
    threaded = parse_config_text(
        minimal(
            "reflected_bm_oracle",
            "[run]\npaths = 10240\nthreads = 4\n[grid]\ndt = 0.01\n",
        )
    )
    assert run_experiment(base) == run_experiment(threaded)


def test_runner_guards_reject_mismatched_configs():
    bad_drift = parse_config_text(
        minimal("reflected_bm_oracle", "[coefficients]\ndrift = constant\ndrift.value = 1\n")
    )
    with pytest.raises(ConfigError, match="zero drift"):
        run_experiment(bad_drift)

    few_iters = parse_config_text(FAST_PICARD, overrides={"run.iterations": "2"})
    with pytest.raises(ConfigError, match="at least 3 iterations"):
        run_experiment(few_iters)

    constrained_mf = parse_config_text(
        minimal("delay_mean_oracle", "[operator]\nkind = halfline\nlower = 0\n")
    )
    with pytest.raises(ConfigError, match="zero operator"):
        run_experiment(constrained_mf)


def test_picard_records_shape():
    records = run_experiment(parse_config_text(FAST_PICARD))
    metrics = [r.metric for r in records]
    assert metrics[0] == "fitted_horizon"
    assert "iterate_gap_01" in metrics
    assert metrics[-1] == "gaps_decreasing"
    assert "max_ratio_n2_n6" in metrics
    by_name = {r.metric: r for r in records}
    assert by_name["max_ratio_n2_n6"].passed
    assert by_name["gaps_decreasing"].passed


def test_wall_seconds_attached_by_dispatch():
    records = run_experiment(parse_config_text(FAST_PICARD))
    assert all(r.wall_seconds > 0.0 for r in records)
    assert len({r.wall_seconds for r in records}) == 1


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------


def write_cfg(tmp_path, text):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    return str(path)


def test_cli_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in EXPERIMENT_DEFAULTS:
        assert name in out


def test_cli_validate_ok(tmp_path, capsys):
    path = write_cfg(tmp_path, FAST_PICARD)
    assert main(["validate", "--config", path]) == 0
    assert "configuration ok" in capsys.readouterr().out


def test_cli_validate_bad_config(tmp_path, capsys):
    path = write_cfg(tmp_path, minimal("warp_drive"))
    assert main(["validate", "--config", path]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:")
    assert "warp_drive" in err


def test_cli_missing_config_file(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.cfg")]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_run_writes_outputs_and_reports(tmp_path, capsys):
    path = write_cfg(tmp_path, FAST_PICARD)
    out_dir = str(tmp_path / "out")
    assert main(["run", "--config", path, "--out", out_dir]) == 0
    out = capsys.readouterr().out
    assert "PASS  picard_contraction/max_ratio_n2_n6" in out
    assert "results in" in out
    for fname in ("results.jsonl", "manifest.cfg", "timings.txt"):
        assert os.path.exists(os.path.join(out_dir, fname))
    records = read_results_jsonl(os.path.join(out_dir, "results.jsonl"))
    assert any(r.metric == "max_ratio_n2_n6" and r.passed for r in records)


def test_cli_manifest_rerun_is_byte_identical(tmp_path):
    path = write_cfg(tmp_path, FAST_PICARD)
    first = str(tmp_path / "a")
    second = str(tmp_path / "b")
    assert main(["run", "--config", path, "--out", first]) == 0
    manifest = os.path.join(first, "manifest.cfg")
    assert main(["run", "--config", manifest, "--out", second]) == 0
    with open(os.path.join(first, "results.jsonl"), "rb") as fh:
        blob_a = fh.read()
    with open(os.path.join(second, "results.jsonl"), "rb") as fh:
        blob_b = fh.read()
    assert blob_a == blob_b


def test_cli_seed_override_changes_results(tmp_path):
    path = write_cfg(tmp_path, FAST_PICARD)
    base = str(tmp_path / "base")
    alt = str(tmp_path / "alt")
    assert main(["run", "--config", path, "--out", base]) == 0
    assert main(["run", "--config", path, "--out", alt, "--seed", "7"]) == 0
    a = read_results_jsonl(os.path.join(base, "results.jsonl"))
    b = read_results_jsonl(os.path.join(alt, "results.jsonl"))
    assert [r.metric for r in a] == [r.metric for r in b]
    assert a != b


def test_cli_exit_one_on_failing_record(tmp_path, capsys):
    # at this step size the projection bias exceeds the shipped tolerances,
    # so the run must report failures and exit nonzero
    path = write_cfg(
        tmp_path,
        minimal("reflected_bm_oracle", "[run]\npaths = 4000\n[grid]\ndt = 0.02\n"),
    )
    assert main(["run", "--config", path, "--out", str(tmp_path / "out")]) == 1
    out = capsys.readouterr().out
    assert "FAIL  reflected_bm_oracle/" in out
