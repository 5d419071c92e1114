from __future__ import annotations

import json
import sys

import pytest

from perfexplain.cli import _subset_profiles, build_parser, main
from perfexplain.evalkit import run_mcq, run_opt, load_mcq_questions, BuildResult
from perfexplain.gateway import Cassette, FunctionProvider, RecordingProvider, ScriptedProvider
from perfexplain.ingest import load_bundle
from perfexplain.model import KnobDecl

from conftest import GAUSSIAN_CASSETTE, GAUSSIAN_DIR, synth_bundle, write_xsbench_dir
from gaussian_playbook import GAUSSIAN_RESPONSES


def test_help_enumerates_every_role_toggle(capsys):
    parser = build_parser()
    with pytest.raises(SystemExit):
        parser.parse_args(["explain", "--help"])
    help_text = capsys.readouterr().out
    for toggle in ("metric_selector", "profile_selector", "drgpu_evaluator", "reviewer"):
        assert toggle in help_text


def test_explain_replay_writes_run_dir(tmp_path, capsys):
    code = main([
        "explain", str(GAUSSIAN_DIR),
        "--replay", str(GAUSSIAN_CASSETTE),
        "--out-dir", str(tmp_path / "run"),
    ])
    assert code == 0
    assert (tmp_path / "run" / "report.md").exists()
    assert (tmp_path / "run" / "review.md").exists()


def test_explain_replay_matches_golden_report(tmp_path):
    golden = GAUSSIAN_DIR.parent / "golden" / "gaussian-report.md"
    code = main([
        "explain", str(GAUSSIAN_DIR),
        "--replay", str(GAUSSIAN_CASSETTE),
        "--out-dir", str(tmp_path / "run"),
    ])
    assert code == 0
    assert (tmp_path / "run" / "report.md").read_bytes() == golden.read_bytes()


def test_explain_disable_reviewer_omits_review(tmp_path):
    code = main([
        "explain", str(GAUSSIAN_DIR),
        "--replay", str(GAUSSIAN_CASSETTE),
        "--disable", "reviewer",
        "--out-dir", str(tmp_path / "run"),
    ])
    assert code == 0
    assert not (tmp_path / "run" / "review.md").exists()


def test_explain_degraded_run_exits_two(tmp_path):
    # Garbage hypothesizer and aggregator outputs; run completes degraded.
    responses = list(GAUSSIAN_RESPONSES)
    responses[2] = "no json in this hypothesis update"
    responses[5] = "no json in this aggregation either"
    responses.pop()  # no hypotheses -> reviewer short-circuits without a call
    cassette = Cassette()
    provider = RecordingProvider(ScriptedProvider(responses), cassette)
    from perfexplain.pipeline import PipelineConfig, run_full

    bundle = load_bundle(GAUSSIAN_DIR)
    result = run_full(bundle, provider, PipelineConfig())
    assert result.degraded
    cassette_path = tmp_path / "degraded.json"
    cassette.save(cassette_path)

    code = main([
        "explain", str(GAUSSIAN_DIR),
        "--replay", str(cassette_path),
        "--out-dir", str(tmp_path / "run"),
    ])
    assert code == 2


def test_explain_without_provider_errors(tmp_path):
    code = main(["explain", str(GAUSSIAN_DIR), "--out-dir", str(tmp_path / "run")])
    assert code == 1


def test_explain_config_file_toggles_and_flag_precedence(tmp_path):
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps({"roles": {"reviewer": False}, "max_passes": 7}))
    code = main([
        "explain", str(GAUSSIAN_DIR),
        "--config", str(config_path),
        "--replay", str(GAUSSIAN_CASSETTE),
        "--out-dir", str(tmp_path / "a"),
    ])
    assert code == 0
    assert not (tmp_path / "a" / "review.md").exists()
    snapshot = json.loads((tmp_path / "a" / "run-config.json").read_text())
    assert snapshot["config"]["max_passes"] == 7

    # A flag overrides the file.
    code = main([
        "explain", str(GAUSSIAN_DIR),
        "--config", str(config_path),
        "--enable", "reviewer",
        "--replay", str(GAUSSIAN_CASSETTE),
        "--out-dir", str(tmp_path / "b"),
    ])
    assert code == 0
    assert (tmp_path / "b" / "review.md").exists()


def test_rank_profiles_prints_distances(tmp_path, capsys):
    write_xsbench_dir(tmp_path, count=6)
    assert main(["rank-profiles", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6
    first_id, first_distance = lines[0].split("\t")
    assert float(first_distance) <= float(lines[-1].split("\t")[1])


def test_validate_report_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.md"
    good.write_text("grounded [[profile:gaussian-h100 metric:dram__throughput = 1.77]]\n")
    bad = tmp_path / "bad.md"
    bad.write_text("ungrounded [[profile:gaussian-h100 metric:dram__throughput = 5.0]]\n")
    assert main(["validate-report", str(GAUSSIAN_DIR), str(good)]) == 0
    assert main(["validate-report", str(GAUSSIAN_DIR), str(bad)]) == 2
    out = capsys.readouterr().out
    assert "value_mismatch" in out


QUESTIONS = [
    {
        "question": "What bounds this kernel?",
        "correct_choices": ["memory latency"],
        "incorrect_choices": ["DRAM bandwidth", "FP64 throughput", "instruction cache"],
    }
]


def test_mcq_context_modes(tmp_path):
    from types import SimpleNamespace

    from perfexplain.cli import _mcq_context

    bundle = load_bundle(GAUSSIAN_DIR)
    assert _mcq_context(SimpleNamespace(context="none"), bundle) == ""
    code_ctx = _mcq_context(SimpleNamespace(context="code"), bundle)
    assert "__global__ void Fan2" in code_ctx and "dram__throughput" not in code_ctx
    data_ctx = _mcq_context(SimpleNamespace(context="code+data"), bundle)
    assert "__global__ void Fan2" in data_ctx and "dram__throughput" in data_ctx
    report = tmp_path / "r.md"
    report.write_text("report body")
    assert _mcq_context(SimpleNamespace(context=str(report)), bundle) == "report body"


def test_eval_mcq_replay(tmp_path, capsys):
    questions_path = tmp_path / "questions.json"
    questions_path.write_text(json.dumps(QUESTIONS))
    cassette = Cassette()
    provider = RecordingProvider(FunctionProvider(lambda req: "ANSWER: A"), cassette)
    run_mcq(load_mcq_questions(questions_path.read_text()), "", provider, attempts=2, seed=0)
    cassette_path = tmp_path / "mcq.json"
    cassette.save(cassette_path)

    code = main([
        "eval-mcq", str(GAUSSIAN_DIR), str(questions_path),
        "--attempts", "2", "--seed", "0",
        "--replay", str(cassette_path),
        "--out", str(tmp_path / "results.json"),
    ])
    assert code == 0
    results = json.loads((tmp_path / "results.json").read_text())
    assert results["task"] == "mcq"
    assert 0.0 <= results["score_at_1"] <= 1.0
    assert len(results["scores"]) == 2


def test_eval_mcq_invalid_questions_exit_one(tmp_path):
    bad = [{"question": "q", "correct_choices": ["x"], "incorrect_choices": ["x"]}]
    questions_path = tmp_path / "bad.json"
    questions_path.write_text(json.dumps(bad))
    code = main([
        "eval-mcq", str(GAUSSIAN_DIR), str(questions_path),
        "--replay", str(GAUSSIAN_CASSETTE),
    ])
    assert code == 1


OPT_REPLY = "```cuda\n__global__ void Fan2() { /* optimized */ }\n```"


def _exec_toml(tmp_path):
    path = tmp_path / "exec.toml"
    path.write_text(
        "[executor]\n"
        f'build_cmd = "{sys.executable} -c pass"\n'
        f'test_cmd = "{sys.executable} -c pass"\n'
        f"time_cmd = \"{sys.executable} -c 'print(0.25)'\"\n"
    )
    return path


def test_eval_opt_replay_with_stub_executor(tmp_path):
    bundle = load_bundle(GAUSSIAN_DIR)
    source = "\n\n".join(s.content for s in bundle.sources)
    report_path = tmp_path / "report.md"
    report_path.write_text("## Suggested optimizations\n\n1. **Increase block size**: do it\n")

    class StubExecutor:
        def build(self, code):
            return BuildResult(ok=True, log="", artifact=code)

        def test(self, artifact):
            return True, ""

        def time(self, artifact):
            return 0.25

    cassette = Cassette()
    provider = RecordingProvider(FunctionProvider(lambda req: OPT_REPLY), cassette)
    run_opt(report_path.read_text(), source, provider, StubExecutor(), attempts=2)
    cassette_path = tmp_path / "opt.json"
    cassette.save(cassette_path)

    code = main([
        "eval-opt", str(GAUSSIAN_DIR), str(report_path),
        "--executor", str(_exec_toml(tmp_path)),
        "--attempts", "2",
        "--replay", str(cassette_path),
        "--out", str(tmp_path / "results.json"),
    ])
    assert code == 0
    results = json.loads((tmp_path / "results.json").read_text())
    assert results["summary"]["reports"][0]["n_valid"] == 2
    # Identical baseline and attempt commands: speedup 1.0 through the toml executor.
    assert results["summary"]["reports"][0]["speedup_at_1"] == pytest.approx(1.0)


def test_explain_profiles_flag_loads_lowest_distance_subset(tmp_path):
    bundle_dir = write_xsbench_dir(tmp_path / "bundle", count=6)
    # Record a run over exactly the subset the CLI will load (--profiles 1
    # keeps the lowest-distance profile), with the same effective config.
    from perfexplain.pipeline import PipelineConfig, run_full
    from perfexplain.cli import _subset_profiles

    bundle = _subset_profiles(load_bundle(bundle_dir), "1")
    assert len(bundle.profiles) == 1
    responses = [
        "a description", "a summary",
        '```json\n[{"id": null, "statement": "bandwidth bound"}]\n```',
        '```json\n{"metric_names": ["dram__throughput"]}\n```',
        "analysis [[profile:%s metric:dram__throughput = 55.5]]" % bundle.profiles[0].id,
        '```json\n{"summary": "s", "bottlenecks": [], "knob_analysis": null, "suggestions": []}\n```',
        '```json\n[{"id": "h1", "verdict": "confirmed"}]\n```',
    ]
    cassette = Cassette()
    run_full(bundle, RecordingProvider(ScriptedProvider(responses), cassette), PipelineConfig())
    cassette_path = tmp_path / "subset.json"
    cassette.save(cassette_path)

    code = main([
        "explain", str(bundle_dir),
        "--profiles", "1",
        "--replay", str(cassette_path),
        "--out-dir", str(tmp_path / "run"),
    ])
    assert code == 0
    report = (tmp_path / "run" / "report.md").read_text()
    assert bundle.profiles[0].id in report


def test_eval_opt_baseline_failure_exits_one(tmp_path):
    report_path = tmp_path / "report.md"
    report_path.write_text("irrelevant")
    exec_toml = tmp_path / "exec.toml"
    exec_toml.write_text(
        "[executor]\n"
        f'build_cmd = "{sys.executable} -c \'import sys; sys.exit(1)\'"\n'
        f'test_cmd = "{sys.executable} -c pass"\n'
        f"time_cmd = \"{sys.executable} -c 'print(0.25)'\"\n"
    )
    code = main([
        "eval-opt", str(GAUSSIAN_DIR), str(report_path),
        "--executor", str(exec_toml),
        "--attempts", "1",
        "--replay", str(GAUSSIAN_CASSETTE),  # never reached; baseline fails first
    ])
    assert code == 1


def test_subset_profiles_by_count_and_ids():
    bundle = synth_bundle(
        num_profiles=4,
        knob_decls=(KnobDecl(name="block_size", type="numeric"),),
        defaults={"block_size": 128},
        profile_knobs=[{"block_size": 1024}, {"block_size": 128},
                       {"block_size": 256}, {"block_size": 512}],
    )
    by_count = _subset_profiles(bundle, "2")
    assert by_count.profile_ids() == ["p01", "p02"]  # two lowest distances, original order
    by_ids = _subset_profiles(bundle, "p00,p03")
    assert by_ids.profile_ids() == ["p00", "p03"]
    with pytest.raises(Exception):
        _subset_profiles(bundle, "p00,ghost")
