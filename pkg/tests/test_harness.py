import json
import math

import numpy as np
import pytest

from sfb.errors import ContractViolation, UnsatisfiableObjective
from sfb.harness import (
    ConstantInputWarning,
    ExperimentConfig,
    ExperimentFailed,
    ResultRow,
    aggregate,
    counterexample_report,
    read_results,
    run_experiment,
    spearman,
)
from sfb.harness.cli import main
from sfb.harness.config import DatasetConfig
from sfb.inference import SearchConfig


def row(alg, score, seed=0, obj="o"):
    return ResultRow("env", alg, obj, "exact", seed, 0.0, 0.0, score, 0.0, 0.0)


def test_spearman_examples():
    xs = np.array([1.0, 2.0, 3.0, 4.0])
    assert spearman(xs, xs) == 1.0
    assert spearman(xs, -xs) == -1.0
    assert spearman(xs, [1, 3, 2, 4]) == pytest.approx(0.8)
    assert spearman([1, 2, 2, 3], [1, 2, 3, 4]) == pytest.approx(0.9486832980505138)
    with pytest.warns(ConstantInputWarning):
        assert spearman([1, 1, 1], [1, 2, 3]) == 0.0
    with pytest.raises(ContractViolation):
        spearman([1.0], [1.0])


def test_aggregate_examples():
    same = aggregate([row("a", 0.5, s) for s in range(3)])
    assert same[0].mean == 0.5 and same[0].ci_half_width == 0.0
    two = aggregate([row("a", 0.0, 0), row("a", 1.0, 1)])
    assert two[0].mean == 0.5
    assert two[0].ci_half_width == pytest.approx(1.96 * math.sqrt(0.5) / math.sqrt(2))
    assert aggregate([row("a", 0.3)])[0].ci_half_width is None


def test_aggregate_bold_flags():
    rows = [row("a", v, i) for i, v in enumerate((0.9, 0.91, 0.92))]
    rows += [row("b", v, i) for i, v in enumerate((0.1, 0.11, 0.12))]
    rows += [row("c", v, i) for i, v in enumerate((0.5, 0.95, 0.7))]
    out = {r.algorithm: r for r in aggregate(rows)}
    assert out["a"].bold and not out["b"].bold and out["c"].bold


def base_config(tmp_path, **kw):
    cfg = dict(env="counterexample", algorithm="sfb_soft", regime="exact",
               objectives=["pure_exploration"], measure_kind="exact", seeds=[0, 1, 2],
               out_dir=str(tmp_path / "run"), search=SearchConfig(n_candidates=256))
    cfg.update(kw)
    return ExperimentConfig(**cfg)


def test_config_validation(tmp_path):
    with pytest.raises(ContractViolation):
        base_config(tmp_path, seeds=[])
    with pytest.raises(ContractViolation):
        base_config(tmp_path, seeds=[1, 1])
    with pytest.raises(ContractViolation):
        base_config(tmp_path, algorithm="fb")
    with pytest.raises(ContractViolation):
        base_config(tmp_path, objectives=["nope"])
    with pytest.raises(ContractViolation):
        base_config(tmp_path, env="grid9")
    with pytest.raises(ContractViolation):
        base_config(tmp_path, train={"lr_sideways": 1.0})
    cfg = base_config(tmp_path)
    assert ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_counterexample_sweep_scores(tmp_path):
    soft = run_experiment(base_config(tmp_path / "s"))
    hard = run_experiment(base_config(tmp_path / "h", algorithm="fb_hard"))
    assert all(abs(r.normalized_score - 1.0) <= 0.01 for r in soft)
    assert all(r.normalized_score == 0.0 for r in hard)
    for r in soft + hard:
        assert abs(r.offline_best - r.ground_truth_of_best) <= 1e-6
        assert 0.0 <= r.normalized_score <= 1.0 and -1.0 <= r.spearman_rho <= 1.0
    manifest = json.loads((tmp_path / "h" / "run" / "manifest.json").read_text())
    assert any("spearman_rho set to 0" in c for c in manifest["choices"])
    assert manifest["wall_time"] > 0


def test_rerun_is_byte_identical(tmp_path):
    cfg = base_config(tmp_path, objectives=["pure_exploration", "robust", "linear"])
    run_experiment(cfg)
    first = (tmp_path / "run" / "results.csv").read_bytes()
    run_experiment(cfg)
    assert (tmp_path / "run" / "results.csv").read_bytes() == first
    parallel = base_config(tmp_path, objectives=["pure_exploration", "robust", "linear"], workers=3,
                           out_dir=str(tmp_path / "par"))
    run_experiment(parallel)
    assert (tmp_path / "par" / "results.csv").read_bytes() == first
    rows = read_results(tmp_path / "run" / "results.csv")
    assert [r.seed for r in rows] == [0, 0, 0, 1, 1, 1, 2, 2, 2]


def test_normalizer_failure_flushes_error_row(tmp_path):
    bad = {"kind": "kl_to_expert", "support": "state_action", "expert": [1.0, 0.0], "name": "impossible"}
    with pytest.raises(ExperimentFailed):
        run_experiment(base_config(tmp_path, objectives=["pure_exploration", bad]))
    rows = read_results(tmp_path / "run" / "results.csv")
    assert len(rows) == 1 and "max_score" in rows[0].error


def test_search_failure_keeps_partial_rows(tmp_path, monkeypatch):
    import sfb.harness.runner as runner

    real = runner.zero_order_search

    def flaky(family, obj, *args, **kw):
        if obj.name == "robust":
            raise UnsatisfiableObjective("objective unsatisfiable under estimates")
        return real(family, obj, *args, **kw)

    monkeypatch.setattr(runner, "zero_order_search", flaky)
    with pytest.raises(ExperimentFailed) as info:
        run_experiment(base_config(tmp_path, objectives=["pure_exploration", "robust", "linear"]))
    rows = read_results(tmp_path / "run" / "results.csv")
    assert [r.objective for r in rows] == ["pure_exploration", ""]
    assert "UnsatisfiableObjective" in rows[-1].error
    assert info.value.rows[-1].error == rows[-1].error


def test_learned_regime_small(tmp_path):
    cfg = ExperimentConfig(env="grid3", algorithm="sfb_soft", regime="learned",
                           objectives=["goal", "pure_exploration"], measure_kind="explicit", seeds=[0],
                           out_dir=str(tmp_path / "l"), search=SearchConfig(n_candidates=32),
                           dataset=DatasetConfig(n_steps=2000, episode_len=4),
                           train={"n_steps": 300}, dim=4)
    rows = run_experiment(cfg)
    assert len(rows) == 2 and not any(r.error for r in rows)


def test_counterexample_report():
    rep = counterexample_report()
    assert np.allclose(rep["M_a1"], [[1, 0], [0.5, 0.5]], atol=1e-12)
    assert np.allclose(rep["M_a2"], [[0.5, 0.5], [0, 1]], atol=1e-12)
    assert rep["hard_entropy_max"] == 0.0
    assert rep["soft_entropy_at_zero"] == pytest.approx(math.log(2), abs=1e-9)
    assert rep["C_nominal"] == 0.25


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["counterexample", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "counterexample.json").exists()
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"env": "counterexample", "algorithm": "sfb_soft", "regime": "exact",
                               "objectives": ["pure_exploration"], "measure_kind": "exact", "seeds": [],
                               "out_dir": str(tmp_path / "x")}))
    assert main(["sweep", "--config", str(cfg)]) == 1
    data = json.loads(cfg.read_text())
    data["seeds"] = [0]
    data["objectives"] = [{"kind": "kl_to_expert", "support": "state_action", "expert": [1.0, 0.0]}]
    cfg.write_text(json.dumps(data))
    assert main(["sweep", "--config", str(cfg)]) == 2
    data["objectives"] = ["pure_exploration"]
    data["search"] = {"n_candidates": 16}
    cfg.write_text(json.dumps(data))
    assert main(["sweep", "--config", str(cfg), "--seed", "4"]) == 0
    assert main(["sweep"]) == 1
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1


def test_cli_pipeline(tmp_path, capsys):
    out = str(tmp_path)
    assert main(["collect", "--env", "grid3", "--steps", "500", "--out", out]) == 0
    assert main(["train", "--env", "grid3", "--dataset", f"{out}/dataset.csv", "--steps", "100",
                 "--dim", "4", "--out", out]) == 0
    assert main(["infer", "--env", "grid3", "--checkpoint", f"{out}/model.npz", "--objective", "goal",
                 "--measure", "implicit", "--candidates", "8", "--out", out]) == 0
    assert (tmp_path / "candidates.csv").exists()
    capsys.readouterr()
    assert main(["eval", "--env", "grid3", "--checkpoint", f"{out}/model.npz", "--objective", "goal",
                 "--best", f"{out}/best.json"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert 0.0 <= result["normalized_score"] <= 1.0
    assert main(["infer", "--env", "counterexample", "--objective", "pure_exploration",
                 "--candidates", "8", "--out", out]) == 0
    assert main(["eval", "--env", "counterexample", "--objective", "pure_exploration", "--z", "0,0"]) == 0
    assert main(["eval", "--env", "grid3", "--checkpoint", f"{out}/model.npz", "--objective", "goal"]) == 1
    assert main(["infer", "--env", "grid3", "--checkpoint", f"{out}/model.npz", "--objective", "goal",
                 "--measure", "explicit", "--out", out]) == 1


def test_selfcheck_cli(capsys):
    assert main(["selfcheck"]) == 0
    assert "FAIL" not in capsys.readouterr().out
