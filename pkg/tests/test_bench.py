import pytest

from sfnet.bench import median_ms, run_bench
from sfnet.config import BenchConfig
from sfnet.errors import ConfigurationError
from sfnet.tensor.core import Precision


def test_report_covers_every_branch():
    report = run_bench(BenchConfig(n_tokens=12, width=4, iters=2, warmup=1), Precision.VERIFICATION, seed=1)
    assert len(report.branch_ms) == 4
    assert report.dense_deviation < 1e-6
    text = report.render()
    assert "branch alpha=2/3" in text
    assert "dense_deviation alpha=1 max_abs=" in text


def test_median_runs_warmup_and_iterations():
    calls = []
    median_ms(lambda: calls.append(1), iters=3, warmup=2)
    assert len(calls) == 5


@pytest.mark.parametrize("cfg", [BenchConfig(n_tokens=1), BenchConfig(iters=0), BenchConfig(warmup=-1)])
def test_invalid_sizes(cfg):
    with pytest.raises(ConfigurationError):
        run_bench(cfg)
