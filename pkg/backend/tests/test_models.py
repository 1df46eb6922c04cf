import numpy as np
import pytest

from app.autograd.gradcheck import gradcheck
from app.autograd.tensor import Tensor, no_grad
from app.exceptions import ShapeError
from app.models import (
    Cscb,
    CylinderMambaBlock,
    Ddcb,
    DdrBlock,
    DdrConv,
    Denoiser,
    LatentMappingNetwork,
    SelectiveSsm,
    Ssen,
    TripleScanLayer,
    Vae,
)
from app.models.conv_blocks import ddr_parameter_comparison
from app.models.denoiser import sinusoidal_embedding, stage_dims, stage_factor
from app.schemas.diffusion import DenoiserInput
from app.services.scan_order import cartesian_order, cylinder_order, inter_slice_seed


def volume(rng, *shape):
    return Tensor(rng.standard_normal(shape))


class TestSelectiveSsm:
    def test_shape(self, rng):
        ssm = SelectiveSsm(3, 2, rng)
        assert ssm(volume(rng, 2, 5, 3)).shape == (2, 5, 3)

    def test_zero_readout_gives_zero_output(self, rng):
        ssm = SelectiveSsm(3, 2, rng)
        ssm.c_proj.weight.assign(np.zeros(ssm.c_proj.weight.shape))
        assert not ssm(volume(rng, 1, 4, 3)).data.any()

    def test_causal(self, rng):
        ssm = SelectiveSsm(2, 3, rng)
        seq = rng.standard_normal((1, 6, 2))
        changed = seq.copy()
        changed[0, 3] += 1.0
        before = ssm(Tensor(seq)).data
        after = ssm(Tensor(changed)).data
        np.testing.assert_allclose(before[:, :3], after[:, :3], atol=1e-12)
        assert not np.allclose(before[:, 3:], after[:, 3:])

    def test_gradients(self, rng):
        ssm = SelectiveSsm(2, 2, rng)
        seq = Tensor(rng.standard_normal((1, 5, 2)), requires_grad=True)
        report = gradcheck(lambda: ssm(seq), [seq, ssm.A_log, ssm.delta_proj.weight], probes=20)
        assert report.passed()

    def test_rejects_wrong_width(self, rng):
        with pytest.raises(ShapeError):
            SelectiveSsm(3, 2, rng)(volume(rng, 1, 4, 2))


class TestTripleScan:
    def test_layer_gradients(self, rng):
        layer = TripleScanLayer(2, 2, cylinder_order((2, 2, 2)), rng)
        f = Tensor(rng.standard_normal((1, 8, 2)), requires_grad=True)
        assert gradcheck(lambda: layer(f), [f], probes=15).passed()

    def test_inter_slice_seed_follows_epoch_in_training(self, rng):
        layer = TripleScanLayer(2, 2, cartesian_order((2, 2, 2)), rng, layer_index=4)
        layer.set_epoch(7)
        assert layer.directions()[2].seed == inter_slice_seed(4, 7)
        layer.eval()
        assert layer.directions()[2].seed == 0

    def test_block_shape(self, rng):
        dims = (2, 2, 2)
        block = CylinderMambaBlock(3, 2, cartesian_order(dims), cylinder_order(dims), rng)
        assert block(volume(rng, 2, 3, *dims)).shape == (2, 3, 2, 2, 2)

    def test_block_without_cylinder_branch(self, rng):
        dims = (2, 2, 2)
        full = CylinderMambaBlock(3, 2, cartesian_order(dims), cylinder_order(dims), rng)
        ablated = CylinderMambaBlock(
            3, 2, cartesian_order(dims), cylinder_order(dims), rng, use_cylinder=False
        )
        assert full.use_cylinder and not ablated.use_cylinder
        assert ablated.num_parameters() * 2 == full.num_parameters()

    def test_block_orders_must_share_dims(self, rng):
        with pytest.raises(ShapeError):
            CylinderMambaBlock(2, 2, cartesian_order((2, 2, 2)), cylinder_order((2, 2, 1)), rng)


class TestConvBlocks:
    def test_ddr_weight_count(self, rng):
        assert DdrConv(4, 4, rng).weight_count() == 144
        comparison = ddr_parameter_comparison(4)
        assert comparison["dense_weights"] == 432
        assert comparison["ratio"] == pytest.approx(3.0)

    def test_even_kernel_rejected(self, rng):
        with pytest.raises(ValueError):
            DdrConv(2, 2, rng, k=4)

    @pytest.mark.parametrize("block", [DdrBlock, Ddcb])
    def test_residual_blocks_keep_shape(self, rng, block):
        x = volume(rng, 1, 2, 4, 4, 4)
        assert block(2, rng)(x).shape == x.shape


class TestVae:
    def test_shapes(self, rng):
        vae = Vae(4, [2, 3], 2, rng)
        logits, latent = vae(volume(rng, 1, 4, 8, 8, 4))
        assert logits.shape == (1, 4, 8, 8, 4)
        assert latent.mean.shape == (1, 2, 2, 2, 1)
        assert latent.logvar.shape == latent.mean.shape

    def test_eval_encode_returns_mean(self, rng):
        vae = Vae(4, [2, 3], 2, rng).eval()
        with no_grad():
            latent, z = vae.encoder.encode(volume(rng, 1, 4, 8, 8, 4), eps=np.ones((1, 2, 2, 2, 1)))
        np.testing.assert_array_equal(z.data, latent.mean.data)

    def test_reparameterized_sample(self, rng):
        vae = Vae(4, [2, 3], 2, rng)
        eps = rng.standard_normal((1, 2, 2, 2, 1))
        with no_grad():
            latent, z = vae.encoder.encode(volume(rng, 1, 4, 8, 8, 4), eps=eps)
        expected = latent.mean.data + np.exp(latent.logvar.data / 2) * eps
        np.testing.assert_allclose(z.data, expected)

    def test_dims_must_divide_by_four(self, rng):
        with pytest.raises(ShapeError):
            Vae(4, [2, 3], 2, rng)(volume(rng, 1, 4, 6, 8, 4))

    def test_latent_mapping_network(self, rng):
        lmn = LatentMappingNetwork(5, [2, 3], 2, rng)
        assert lmn(volume(rng, 1, 5, 8, 8, 4)).shape == (1, 2, 2, 2, 1)


def test_ssen_reaches_latent_resolution(rng):
    ssen = Ssen(4, 2, rng)
    assert ssen(volume(rng, 1, 5, 8, 8, 4)).shape == (1, 4, 2, 2, 1)
    with pytest.raises(ShapeError):
        ssen(volume(rng, 1, 4, 8, 8, 4))


class TestDenoiser:
    def build(self, rng, **switches):
        return Denoiser((2, 2, 1), 2, 4, [4, 6], 1, 2, rng, **switches)

    def test_output_matches_latent(self, rng):
        denoiser = self.build(rng)
        out = denoiser(volume(rng, 2, 2, 2, 2, 1), np.array([0, 3]), volume(rng, 2, 2, 2, 2, 1),
                       volume(rng, 2, 4, 2, 2, 1))
        assert out.shape == (2, 2, 2, 2, 1)
        assert denoiser.stage_dims == [(2, 2, 1), (1, 1, 1)]

    def test_ablation_drops_cylinder_parameters(self, rng):
        assert self.build(rng, use_cylinder=False).num_parameters() < self.build(rng).num_parameters()

    @pytest.mark.parametrize("switch,block", [("use_cscb", "cond_context"), ("use_ddcb", "cond_dilated")])
    def test_condition_block_ablation(self, rng, switch, block):
        full = self.build(rng)
        ablated = self.build(rng, **{switch: False})
        assert getattr(full, switch) and not getattr(ablated, switch)
        assert getattr(ablated, block) is None
        assert not any(name.startswith(block) for name in ablated.state_dict())
        assert ablated.num_parameters() < full.num_parameters()
        out = ablated(volume(rng, 1, 2, 2, 2, 1), np.array([1]), volume(rng, 1, 2, 2, 2, 1), volume(rng, 1, 4, 2, 2, 1))
        assert out.shape == (1, 2, 2, 2, 1)

    def test_set_epoch_reaches_every_block(self, rng):
        denoiser = self.build(rng)
        denoiser.set_epoch(2)
        block = denoiser.stages[1][0]
        assert block.cylinder.directions()[2].seed == inter_slice_seed(3, 2)

    def test_mismatched_condition(self, rng):
        with pytest.raises(ValueError):
            DenoiserInput(
                x_t=volume(rng, 1, 2, 2, 2, 1),
                t=[0],
                cond=volume(rng, 1, 2, 2, 2, 2),
                ssen_logits=volume(rng, 1, 4, 2, 2, 1),
            )

    def test_one_timestep_per_sample(self, rng):
        with pytest.raises(ValueError):
            DenoiserInput(
                x_t=volume(rng, 2, 2, 2, 2, 1),
                t=[0],
                cond=volume(rng, 2, 2, 2, 2, 1),
                ssen_logits=volume(rng, 2, 4, 2, 2, 1),
            )


class TestStageGeometry:
    def test_factor_keeps_single_slice(self):
        assert stage_factor((4, 4, 2)) == (2, 2, 2)
        assert stage_factor((4, 4, 1)) == (2, 2, 1)

    def test_stage_dims(self):
        assert stage_dims((8, 8, 2), 3) == [(8, 8, 2), (4, 4, 1), (2, 2, 1)]

    def test_stage_dims_must_halve(self):
        with pytest.raises(ShapeError):
            stage_dims((3, 2, 1), 2)


def test_sinusoidal_embedding():
    emb = sinusoidal_embedding(np.array([0, 5]), 5)
    assert emb.shape == (2, 5)
    np.testing.assert_array_equal(emb[0], [0.0, 0.0, 1.0, 1.0, 0.0])
    assert emb[1, -1] == 0.0


class TestGradientSuite:
    """Finite-difference checks for every network block"""

    def check(self, fn, inputs, probes=10):
        report = gradcheck(fn, inputs, probes=probes)
        assert len(report.probes) >= 10
        assert report.passed(), f"max relative error {report.max_rel_error:.3e}"

    def test_ddr(self, rng):
        ddr = DdrConv(2, 2, rng)
        x = Tensor(rng.standard_normal((1, 2, 3, 3, 3)), requires_grad=True)
        self.check(lambda: ddr(x), [x, ddr.conv_h.weight, ddr.conv_l.bias])

    def test_cscb(self, rng):
        block = Cscb(2, rng)
        x = Tensor(rng.standard_normal((1, 2, 3, 3, 3)), requires_grad=True)
        self.check(lambda: block(x), [x, block.conv_in.weight])

    def test_ddcb(self, rng):
        block = Ddcb(2, rng)
        x = Tensor(rng.standard_normal((1, 2, 4, 4, 4)), requires_grad=True)
        self.check(lambda: block(x), [x])

    @pytest.mark.parametrize("ordering", [cartesian_order, cylinder_order])
    def test_triple_and_cylinder_layers(self, rng, ordering):
        layer = TripleScanLayer(2, 2, ordering((2, 2, 2)), rng)
        f = Tensor(rng.standard_normal((1, 8, 2)), requires_grad=True)
        self.check(lambda: layer(f), [f, layer.scan_slices.A_log, layer.mlp.fc1.weight])

    def test_cylinder_mamba_block(self, rng):
        dims = (2, 2, 2)
        block = CylinderMambaBlock(2, 2, cartesian_order(dims), cylinder_order(dims), rng)
        x = Tensor(rng.standard_normal((1, 2) + dims), requires_grad=True)
        self.check(lambda: block(x), [x])

    def test_ssen(self, rng):
        ssen = Ssen(2, 2, rng)
        cond = Tensor(rng.standard_normal((1, 3, 4, 4, 4)), requires_grad=True)
        self.check(lambda: ssen(cond), [cond, ssen.head.weight])

    def test_vae_encoder_and_decoder(self, rng):
        vae = Vae(2, [2, 2], 1, rng).eval()
        x = Tensor(rng.standard_normal((1, 2, 4, 4, 4)), requires_grad=True)
        z = Tensor(rng.standard_normal((1, 1, 1, 1, 1)), requires_grad=True)
        self.check(lambda: vae.encoder(x).mean, [x])
        self.check(lambda: vae.decoder(z), [z, vae.decoder.head.weight])

    def test_denoiser(self, rng):
        denoiser = Denoiser((2, 2, 1), 1, 2, [2, 3], 1, 2, rng)
        x_t = Tensor(rng.standard_normal((1, 1, 2, 2, 1)), requires_grad=True)
        cond = Tensor(rng.standard_normal((1, 1, 2, 2, 1)), requires_grad=True)
        ssen_logits = Tensor(rng.standard_normal((1, 2, 2, 2, 1)))
        self.check(lambda: denoiser(x_t, np.array([2]), cond, ssen_logits), [x_t, cond])
