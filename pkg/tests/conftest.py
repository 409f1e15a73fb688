import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from reidgallery import driftsim, runner  # noqa: E402
from reidgallery.embedstore import save_embeddings  # noqa: E402
from reidgallery.manifest import write_manifest  # noqa: E402


@pytest.fixture(scope="session")
def default_dataset():
    return driftsim.generate(driftsim.DriftConfig())


@pytest.fixture(scope="session")
def default_reports(default_dataset):
    """Reports for every preset and variant of the default synthetic dataset."""
    ds = default_dataset
    out = {}
    for preset, policy in runner.PRESET_POLICIES.items():
        for variant, matrix in ds.embeddings.items():
            cfg = runner.ExperimentConfig(
                experiment_name=preset.upper(),
                manifest_path=Path("unused"),
                embeddings={variant: Path("unused")},
                policy=policy,
                seed=ds.config.seed,
            )
            out[(preset.upper(), variant)] = runner.run_experiment(
                cfg, variant, records=ds.records, schedule=ds.schedule, matrix=matrix
            )
    return out


@pytest.fixture
def tiny_dataset_dir(tmp_path):
    """A small simulated dataset on disk with preset configs."""
    cfg = driftsim.DriftConfig(num_entities=6, num_days=5, dim=16, seed=7)
    ds = driftsim.generate(cfg)
    write_manifest(tmp_path / "manifest.csv", ds.records)
    emb = {}
    for name, matrix in ds.embeddings.items():
        save_embeddings(tmp_path / f"embeddings_{name}.pbeb", matrix)
        emb[name] = f"embeddings_{name}.pbeb"
    return tmp_path, ds, emb


ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(name: str, ok: bool, detail: str = ""):
        ACCEPTANCE_RESULTS[name] = (bool(ok), detail)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
