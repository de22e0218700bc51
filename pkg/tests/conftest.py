import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import VERDICTS  # noqa: E402
from usualmvpa import ingest, simulate  # noqa: E402
from usualmvpa.mcmc import ChainConfig, run_chains  # noqa: E402


@pytest.fixture(scope="session")
def small_cohort():
    """150 synthetic persons with reference truth, as (records, design, panel, hidden)."""
    rng = np.random.default_rng(20240601)
    records = simulate.simulate_covariates(150, rng)
    design = ingest.build_design(records)
    panel, hidden = simulate.simulate_panel(simulate.reference_truth(), design.Z, rng)
    panel.person_ids = design.person_ids
    return records, design, panel, hidden


@pytest.fixture(scope="session")
def small_fit(small_cohort):
    _, design, panel, _ = small_cohort
    cfg = ChainConfig(n_chains=2, n_iter=700, n_burnin=300, thin=2, seed=11)
    return run_chains(panel, cfg=cfg, columns=design.columns)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(VERDICTS):
            terminalreporter.write_line(line)
