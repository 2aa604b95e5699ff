import subprocess
import sys

import numpy as np
import pytest

from shrinkcast.checkpoint import ModelConfig, read_checkpoint, write_checkpoint
from shrinkcast.cli import main
from shrinkcast.data import synthetic_grammar_corpus, write_token_corpus
from shrinkcast.model import init_checkpoint


@pytest.fixture
def workspace(tmp_path):
    teacher = init_checkpoint(ModelConfig(4, 2, 16, 17, 8), seed=1)
    teacher_path = tmp_path / "teacher.tckp"
    write_checkpoint(teacher, str(teacher_path))
    corpus_path = tmp_path / "corpus.bin"
    write_token_corpus(str(corpus_path), synthetic_grammar_corpus(2000, 17, seed=0))
    return tmp_path, str(teacher_path), str(corpus_path)


class TestExitCodes:
    def test_success_is_zero(self, capsys):
        assert main(["plan", "--strategy", "uniform", "-n", "12", "-k", "6"]) == 0

    def test_usage_error_is_one(self, capsys):
        assert main(["plan", "--strategy", "uniform"]) == 1
        assert main(["no-such-command"]) == 1
        assert main(["truncate", "--teacher", "x", "--out", "y"]) == 1  # plan missing

    def test_runtime_error_is_two_with_parseable_line(self, capsys):
        rc = main(["plan", "--strategy", "pseudo_uniform", "-n", "12", "-k", "5"])
        assert rc == 2
        err = capsys.readouterr().err
        assert err.startswith("error: plan:")

    def test_missing_file_is_runtime_error(self, tmp_path, capsys):
        rc = main(["eval-ppl", "--ckpt", str(tmp_path / "no.tckp"),
                   "--corpus", str(tmp_path / "no.bin")])
        assert rc == 2
        assert capsys.readouterr().err.startswith("error: eval-ppl:")


class TestPlan:
    def test_prints_plan_line(self, capsys):
        assert main(["plan", "--strategy", "pseudo_uniform", "-n", "12", "-k", "6"]) == 0
        assert capsys.readouterr().out.strip() == "pseudo_uniform 12 6 0,2,4,7,9,11"

    def test_random_requires_seed(self, capsys):
        assert main(["plan", "--strategy", "random", "-n", "12", "-k", "6"]) == 2
        assert main(["plan", "--strategy", "random", "-n", "12", "-k", "6",
                     "--seed", "3"]) == 0


class TestTruncate:
    def test_plan_line_flag(self, workspace, capsys):
        tmp_path, teacher_path, _ = workspace
        out = tmp_path / "student.tckp"
        rc = main(["truncate", "--teacher", teacher_path,
                   "--plan", "pseudo_uniform 4 2 0,3", "--out", str(out)])
        assert rc == 0
        assert read_checkpoint(str(out)).config.n_layers == 2

    def test_plan_file_flag(self, workspace, capsys):
        tmp_path, teacher_path, _ = workspace
        plan_file = tmp_path / "plan.txt"
        plan_file.write_text("uniform 4 2 0,3\n", encoding="utf-8")
        out = tmp_path / "student.tckp"
        rc = main(["truncate", "--teacher", teacher_path,
                   "--plan-file", str(plan_file), "--out", str(out)])
        assert rc == 0

    def test_mismatched_plan_is_runtime_error(self, workspace, capsys):
        tmp_path, teacher_path, _ = workspace
        rc = main(["truncate", "--teacher", teacher_path,
                   "--plan", "uniform 12 6 0,2,4,6,8,10",
                   "--out", str(tmp_path / "s.tckp")])
        assert rc == 2


class TestClean(object):
    def test_end_to_end(self, tmp_path, capsys):
        src = tmp_path / "in.txt"
        src.write_text(
            "a perfectly ordinary line of text\nshort\n"
            "a perfectly ordinary line of text\n",
            encoding="utf-8",
        )
        out = tmp_path / "out.txt"
        stats = tmp_path / "stats.csv"
        rc = main(["clean", "--input", str(src), "--output", str(out),
                   "--stats", str(stats), "--jobs", "2",
                   "--short-threshold", "3", "--ratio-threshold", "0.10",
                   "--html-strip-threshold", "0.30"])
        assert rc == 0
        assert out.read_text(encoding="utf-8") == "a perfectly ordinary line of text\n"
        assert stats.read_text(encoding="utf-8").splitlines()[1].startswith("3,1,")


class TestTrainCommands:
    def test_pretrain_from_init_config(self, workspace, capsys):
        tmp_path, _, corpus_path = workspace
        out = tmp_path / "model.tckp"
        log = tmp_path / "loss.csv"
        rc = main(["pretrain", "--init-config", "2,2,16,17,8",
                   "--corpus", corpus_path, "--out", str(out),
                   "--steps", "3", "--batch", "2", "--loss-log", str(log)])
        assert rc == 0
        assert read_checkpoint(str(out)).config.n_layers == 2
        assert log.read_text(encoding="utf-8").splitlines()[0] == "step,loss"

    def test_finetune_from_checkpoint(self, workspace, capsys):
        tmp_path, teacher_path, corpus_path = workspace
        out = tmp_path / "tuned.tckp"
        rc = main(["finetune", "--ckpt", teacher_path, "--corpus", corpus_path,
                   "--out", str(out), "--steps", "2", "--batch", "2"])
        assert rc == 0

    def test_ckpt_and_init_config_mutually_exclusive(self, workspace, capsys):
        tmp_path, teacher_path, corpus_path = workspace
        rc = main(["pretrain", "--ckpt", teacher_path, "--init-config", "2,2,16,17,8",
                   "--corpus", corpus_path, "--out", str(tmp_path / "x.tckp")])
        assert rc == 1

    def test_bad_init_config_is_runtime_error(self, workspace, capsys):
        tmp_path, _, corpus_path = workspace
        rc = main(["pretrain", "--init-config", "2,2",
                   "--corpus", corpus_path, "--out", str(tmp_path / "x.tckp")])
        assert rc == 2


class TestDistillCommand:
    @pytest.mark.parametrize("method", ["vanilla_kd", "ls", "self_kd"])
    def test_methods(self, workspace, capsys, method):
        tmp_path, teacher_path, corpus_path = workspace
        student_path = tmp_path / "student.tckp"
        main(["truncate", "--teacher", teacher_path, "--plan",
              "pseudo_uniform 4 2 0,3", "--out", str(student_path)])
        out = tmp_path / f"distilled_{method}.tckp"
        rc = main(["distill", "--student", str(student_path),
                   "--teacher", teacher_path, "--method", method,
                   "--corpus", corpus_path, "--out", str(out),
                   "--steps", "2", "--batch", "2"])
        assert rc == 0
        assert read_checkpoint(str(out)).config.n_layers == 2


class TestEvalAndRun:
    def test_eval_ppl_prints_number(self, workspace, capsys):
        _, teacher_path, corpus_path = workspace
        assert main(["eval-ppl", "--ckpt", teacher_path, "--corpus", corpus_path]) == 0
        value = float(capsys.readouterr().out.strip())
        assert np.isfinite(value) and value > 1.0

    def test_run_and_report(self, workspace, capsys):
        tmp_path, _, corpus_path = workspace
        spec = tmp_path / "exp.spec"
        spec.write_text(
            "name = cli-smoke\n"
            "teacher_layers = 4\nstudent_layers = 2\nn_heads = 2\nd_model = 16\n"
            "vocab_size = 17\nmax_seq_len = 8\n"
            f"pretrain_corpus = {corpus_path}\nfinetune_corpus = {corpus_path}\n"
            "teacher_steps = 3\npretrain_steps = 2\nfinetune_steps = 2\n"
            "pretrain_batch = 2\nfinetune_batch = 2\n",
            encoding="utf-8",
        )
        out_dir = tmp_path / "run_out"
        assert main(["run", "--spec", str(spec), "--out-dir", str(out_dir)]) == 0
        stdout = capsys.readouterr().out
        assert stdout.startswith("name,strategy,")
        assert (out_dir / "result.csv").exists()

        report_csv = tmp_path / "report.csv"
        report_txt = tmp_path / "report.txt"
        rc = main(["report", "--rows", str(out_dir / "result.csv"),
                   "--out-csv", str(report_csv), "--out-txt", str(report_txt)])
        assert rc == 0
        assert report_csv.exists() and report_txt.exists()


def test_console_script_installed():
    proc = subprocess.run(
        [sys.executable, "-m", "shrinkcast.cli", "plan",
         "--strategy", "uniform", "-n", "12", "-k", "6"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip() == "uniform 12 6 0,2,4,6,8,10"
