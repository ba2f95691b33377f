import numpy as np
import pytest

from xfdd.nn import NetworkSpec, init_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)


def make_model(input_dim, encoder_widths, num_classes=2, seed=0,
               activation="tanh", decoder_output_activation="linear",
               zero_bias=False):
    """Small helper: a mirrored-decoder model, optionally bias-free."""
    spec = NetworkSpec.mirrored(
        input_dim, encoder_widths, num_classes=num_classes,
        activation=activation,
        decoder_output_activation=decoder_output_activation, seed=seed,
    )
    model = init_model(spec)
    if zero_bias:
        for layer in model.encoder + model.decoder + [model.classifier]:
            layer.b[:] = 0.0
    return model
