import numpy as np
import pytest
import torch

from contactnet.backbone import BackboneConfig, ConvBackbone
from contactnet.errors import ConfigError
from helpers import assert_grad_matches_fd, sample_indices


def test_output_shape_128():
    net = ConvBackbone().eval()
    out = net(torch.rand(2, 3, 128, 128))
    assert out.shape == (2, 64, 4, 4)


def test_output_shape_non_square():
    net = ConvBackbone().eval()
    out = net(torch.rand(1, 3, 64, 96))
    assert out.shape == (1, 64, 2, 3)


def test_eval_determinism():
    net = ConvBackbone().eval()
    x = torch.rand(1, 3, 64, 64)
    assert torch.equal(net(x), net(x))


def test_rejects_bad_sizes():
    net = ConvBackbone()
    with pytest.raises(ValueError, match="multiple of 32"):
        net(torch.rand(1, 3, 100, 128))
    with pytest.raises(ValueError):
        net(torch.rand(1, 4, 64, 64))


def test_config_validation():
    with pytest.raises(ConfigError):
        BackboneConfig(stage_widths=(16, 32, 64))
    with pytest.raises(ConfigError):
        BackboneConfig(channels=64, stage_widths=(16, 16, 16, 16, 32))


def test_gradient_wrt_image_pixels():
    torch.manual_seed(0)
    net = ConvBackbone().double().eval()
    x = torch.rand(1, 3, 64, 64, dtype=torch.float64, requires_grad=True)
    rng = np.random.default_rng(0)
    pixels = sample_indices((1, 3, 64, 64), 3, rng)
    assert_grad_matches_fd(lambda: net(x).sum(), x, pixels)


def test_gradient_every_parameter_group():
    torch.manual_seed(1)
    net = ConvBackbone().double().eval()
    x = torch.rand(1, 3, 64, 64, dtype=torch.float64)
    rng = np.random.default_rng(1)
    for name, param in net.named_parameters():
        indices = sample_indices(tuple(param.shape), 2, rng)
        assert_grad_matches_fd(lambda: net(x).sum(), param, indices), name
