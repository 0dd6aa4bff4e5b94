import numpy as np
import pytest

from segaug.autodiff import default_dtype


@pytest.fixture
def f64():
    with default_dtype(np.float64):
        yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


TINY = {
    "image_size": 32,
    "n_records": 30,
    "epochs_seg": 1,
    "epochs_gan": 1,
    "batch_size": 4,
    "generator.base_channels": 8,
    "generator.min_channels": 4,
    "generator.spade_hidden": 4,
    "generator.embed_dim": 4,
    "discriminator.base_channels": 4,
    "discriminator.n_layers": 2,
    "segmentor.stem_width": 4,
    "segmentor.stage_widths": "4,4,8,8",
    "segmentor.decoder_widths": "8,8,4,4,4",
}


def tiny_config(**overrides):
    """Smallest experiment that still exercises every stage."""
    from segaug.config import load_config

    values = dict(TINY)
    values.update(overrides)
    return load_config(None, values)


def tiny_config_text(**overrides) -> str:
    values = dict(TINY)
    values.update(overrides)
    return "".join(f"{k} = {v}\n" for k, v in values.items())


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
