import numpy as np
import pytest
import torch

from reference import softmax_loop
from talkingface.losses import hinge_d_loss
from talkingface.netarch import (Discriminator, Generator, MasterNet, fields_from_logits, get_profile,
                                 masks_from_logits)


@pytest.fixture(scope="module")
def desk_gen():
    torch.manual_seed(0)
    return Generator(5, "desk").eval()


@pytest.mark.parametrize("size", [64, 96, 32])
def test_generator_shapes_desk(desk_gen, size):
    x = torch.randn(1, 25, size, size)
    with torch.no_grad():
        out = desk_gen(x)
    assert desk_gen.master(x).shape == (1, 16, size, size)
    assert out["output"].shape == (1, 3, size, size)
    assert out["masks"].shape == (1, 5, 1, size, size)
    assert out["raw_fields"].shape == (1, 5, 2, size, size)
    assert out["merge_mask"].shape == (1, 1, size, size)


def test_master_full_profile_shape():
    torch.manual_seed(0)
    net = MasterNet(25, get_profile("full").gen_width).eval()
    with torch.no_grad():
        assert net(torch.randn(1, 25, 224, 224)).shape == (1, 64, 224, 224)


def test_indivisible_sizes_rejected(desk_gen):
    with pytest.raises(ValueError):
        desk_gen(torch.randn(1, 25, 30, 30))
    with pytest.raises(ValueError):
        Discriminator("desk")(torch.randn(1, 3, 40, 40))


def test_wrong_channel_count(desk_gen):
    with pytest.raises(ValueError):
        desk_gen(torch.randn(1, 20, 32, 32))


def test_mask_head_uniform_and_limit():
    masks = masks_from_logits(torch.zeros(1, 4, 3, 3))
    assert torch.allclose(masks, torch.full_like(masks, 0.25))
    logits = torch.zeros(1, 3, 2, 2)
    logits[0, 1, 0, 0] = 1e4
    m = masks_from_logits(logits)
    assert m[0, 1, 0, 0, 0] == 1.0 and m[0, 0, 0, 0, 0] == 0.0 and m[0, 2, 0, 0, 0] == 0.0


def test_mask_head_matches_softmax_oracle():
    logits = torch.from_numpy(np.random.default_rng(0).normal(size=(1, 3, 4, 4)) * 3)
    got = masks_from_logits(logits)[0, :, 0].numpy()
    np.testing.assert_allclose(got, softmax_loop(logits[0].numpy()), atol=1e-6)


def test_field_head_range():
    assert torch.equal(fields_from_logits(torch.zeros(1, 4, 2, 2)), torch.zeros(1, 2, 2, 2, 2))
    big = fields_from_logits(torch.full((1, 2, 1, 1), 30.0))
    assert torch.all(big <= 1.0) and big.min() > 0.999
    r = fields_from_logits(torch.randn(1, 6, 8, 8) * 5)
    assert torch.all(r.abs() <= 1.0)


def test_field_channel_pairing():
    logits = torch.arange(6.0).reshape(1, 6, 1, 1) / 10
    f = fields_from_logits(logits)
    assert torch.allclose(f[0, 1, :, 0, 0], torch.tanh(torch.tensor([0.2, 0.3])))


def test_appearance_and_merge_heads_at_zero(desk_gen):
    feats = torch.zeros(1, 16, 8, 8)
    with torch.no_grad():
        heads = desk_gen.heads(feats)
    # zero features -> only the biases, which start at zero
    assert torch.all(heads["appearance"] == 0.0)
    assert torch.all(heads["merge_mask"] == 0.5)


def test_head_contracts_random_inputs(desk_gen):
    torch.manual_seed(1)
    with torch.no_grad():
        out = desk_gen(torch.randn(2, 25, 32, 32) * 2)
    assert torch.allclose(out["masks"].sum(1), torch.ones(2, 1, 32, 32), atol=1e-5)
    assert out["merge_mask"].min() >= 0 and out["merge_mask"].max() <= 1
    assert out["appearance"].abs().max() <= 1
    assert out["fields"].abs().max() <= 40.0


@pytest.mark.parametrize("size, grid", [(224, 14), (64, 4)])
def test_discriminator_shapes(size, grid):
    torch.manual_seed(0)
    d = Discriminator("full" if size == 224 else "desk")
    assert d(torch.randn(1, 3, size, size)).shape == (1, 1, grid, grid)


def test_discriminator_has_no_normalization_layers():
    d = Discriminator("desk")
    assert not any(isinstance(m, (torch.nn.InstanceNorm2d, torch.nn.BatchNorm2d)) for m in d.modules())
    slopes = {m.negative_slope for m in d.modules() if isinstance(m, torch.nn.LeakyReLU)}
    assert slopes == {0.01}


def test_zero_score_layer_gives_unit_hinge():
    d = Discriminator("desk")
    with torch.no_grad():
        d.score.weight.zero_()
        d.score.bias.zero_()
    s = d(torch.randn(2, 3, 64, 64))
    assert torch.all(s == 0)
    assert torch.relu(1 - s).mean().item() == 1.0
    assert hinge_d_loss(s, s).item() == 2.0


def test_forward_deterministic(desk_gen):
    x = torch.randn(1, 25, 32, 32)
    with torch.no_grad():
        a, b = desk_gen(x)["output"], desk_gen(x)["output"]
    assert torch.equal(a, b)


def test_all_heads_receive_gradients():
    torch.manual_seed(2)
    g = Generator(3, "desk")
    out = g(torch.randn(1, 15, 32, 32))
    loss = sum(out[k].pow(2).sum() for k in ("appearance", "masks", "raw_fields", "merge_mask"))
    loss.backward()
    for name in ("head_appearance", "head_masks", "head_fields", "head_merge", "master"):
        grads = [p.grad for p in getattr(g, name).parameters()]
        assert all(gr is not None and torch.isfinite(gr).all() for gr in grads)
        assert any(gr.abs().sum() > 0 for gr in grads)


def test_convs_are_spectrally_normalised():
    g = Generator(2, "desk")
    convs = [m for m in g.modules() if isinstance(m, torch.nn.Conv2d)]
    assert convs and all(hasattr(m, "parametrizations") for m in convs)
    # after a few power iterations the effective weight has unit top singular value
    g.train()
    for _ in range(30):
        g(torch.randn(1, 10, 16, 16))
    w = g.head_masks.weight.detach().reshape(2, -1)
    assert torch.linalg.matrix_norm(w, ord=2).item() == pytest.approx(1.0, abs=1e-3)
