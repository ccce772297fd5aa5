"""
Shared fixtures: float64 mode and tiny synthetic corpora.
"""
import pytest

from kernkit.dataset.synth import generate_synthetic_corpus
from kernkit.numerics.tensor import float_mode, set_float_mode
from kernkit.schemas import SynthConfig


@pytest.fixture
def float64():
    """Run the test in float64 mode."""
    with float_mode("float64"):
        yield


@pytest.fixture
def tiny_synth_config():
    return SynthConfig(
        n_categories=4,
        image_size=32,
        train_fonts=4,
        val_fonts=2,
        test_fonts=2,
        seed=3,
    )


@pytest.fixture
def tiny_corpus(tmp_path, tiny_synth_config):
    """Path to a freshly generated 8-font corpus (N=4, H=32)."""
    root = tmp_path / "corpus"
    generate_synthetic_corpus(tiny_synth_config, root)
    return root


@pytest.fixture(autouse=True)
def _restore_float_mode():
    """The CLI switches the process-wide float mode; put it back after every test."""
    yield
    set_float_mode("float32")
