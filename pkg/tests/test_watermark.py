import numpy as np
import pytest

from wmeval.errors import CapacityError, ParameterError, ShapeError
from wmeval.imageops import DistortionSpec, RasterImage, apply_distortion, psnr
from wmeval.watermark import (EmbedConfig, WatermarkMessage, bit_accuracy,
                              capacity, embed, extract)

from conftest import texture_image

# frozen regression value for the default config
EMBED_PSNR_256_RGB_SEED7 = 49.81978478290317


class TestWatermarkMessage:
    def test_bits_validated(self):
        with pytest.raises(ParameterError):
            WatermarkMessage(())
        with pytest.raises(ParameterError):
            WatermarkMessage((0, 2, 1))

    def test_hex_round_trip(self):
        msg = WatermarkMessage((1, 0, 1, 1, 0, 0, 1, 0, 1, 1))
        again = WatermarkMessage.from_hex(msg.to_hex(), len(msg))
        assert again == msg

    def test_hex_round_trip_random(self):
        for seed in range(20):
            n = int(np.random.default_rng(seed).integers(1, 48))
            msg = WatermarkMessage.random(n, seed=seed)
            assert WatermarkMessage.from_hex(msg.to_hex(), n) == msg

    def test_from_hex_rejects_bad_input(self):
        with pytest.raises(ParameterError):
            WatermarkMessage.from_hex("zz", 8)
        with pytest.raises(ParameterError):
            WatermarkMessage.from_hex("f", 8)  # not enough bits
        with pytest.raises(ParameterError):
            WatermarkMessage.from_hex("ff", 4)  # nonzero padding

    def test_random_is_seeded(self):
        assert WatermarkMessage.random(32, 5) == WatermarkMessage.random(32, 5)
        assert WatermarkMessage.random(32, 5) != WatermarkMessage.random(32, 6)


class TestEmbedConfig:
    def test_validation(self):
        with pytest.raises(ParameterError):
            EmbedConfig(strength=0.0)
        with pytest.raises(ParameterError):
            EmbedConfig(coeff_index=0)
        with pytest.raises(ParameterError):
            EmbedConfig(coeff_index=64)


class TestCapacity:
    @pytest.mark.parametrize("w,h", [(16, 16), (64, 48), (130, 94), (255, 255)])
    def test_capacity_law(self, w, h):
        img = texture_image(w, h, 1, seed=w + h)
        assert capacity(img) == (h // 2 // 8) * (w // 2 // 8)

    def test_embed_rejects_oversized_message(self):
        img = texture_image(32, 32, 1, seed=1)  # capacity 4
        msg = WatermarkMessage.random(5, seed=0)
        with pytest.raises(CapacityError):
            embed(img, msg)
        with pytest.raises(CapacityError):
            extract(img, 5)


class TestRoundTrip:
    def test_clean_gray(self):
        img = texture_image(128, 128, 1, seed=21)
        msg = WatermarkMessage.random(32, seed=2)
        assert bit_accuracy(msg, extract(embed(img, msg), 32)) == 1.0

    def test_clean_rgb(self):
        img = texture_image(128, 128, 3, seed=22)
        msg = WatermarkMessage.random(32, seed=3)
        assert bit_accuracy(msg, extract(embed(img, msg), 32)) == 1.0

    def test_clean_odd_dimensions(self):
        img = texture_image(129, 97, 1, seed=23)
        msg = WatermarkMessage.random(capacity(img), seed=4)
        assert bit_accuracy(msg, extract(embed(img, msg), len(msg))) == 1.0

    def test_extract_on_unmarked_image_is_total(self):
        img = RasterImage(np.full((64, 64), 128, dtype=np.uint8))
        got = extract(img, 8)
        assert len(got) == 8

    def test_embed_determinism(self):
        img = texture_image(96, 96, 1, seed=24)
        msg = WatermarkMessage.random(16, seed=5)
        a = embed(img, msg)
        b = embed(img, msg)
        assert np.array_equal(a.pixels, b.pixels)

    def test_embed_preserves_shape(self):
        img = texture_image(96, 64, 3, seed=25)
        msg = WatermarkMessage.random(8, seed=6)
        out = embed(img, msg)
        assert out.pixels.shape == img.pixels.shape


class TestFidelity:
    def test_psnr_of_marked_image(self):
        img = texture_image(256, 256, 3, seed=7)
        msg = WatermarkMessage.random(32, seed=1)
        value = psnr(img, embed(img, msg))
        assert value >= 35.0
        assert value == pytest.approx(EMBED_PSNR_256_RGB_SEED7, abs=1e-9)

    def test_stronger_embedding_costs_fidelity(self):
        deltas = []
        for seed in range(20):
            img = texture_image(96, 96, 1, seed=400 + seed)
            msg = WatermarkMessage.random(capacity(img), seed=seed)
            weak = psnr(img, embed(img, msg, EmbedConfig(strength=36.0)))
            strong = psnr(img, embed(img, msg, EmbedConfig(strength=72.0)))
            deltas.append(weak - strong)
        assert all(d >= 0 for d in deltas)


class TestBitAccuracy:
    def test_fixtures(self):
        a = WatermarkMessage((0, 1, 0, 1, 0, 1, 0, 1))
        b = WatermarkMessage(tuple(1 - x for x in a.bits))
        assert bit_accuracy(a, a) == 1.0
        assert bit_accuracy(a, b) == 0.0
        flipped = list(a.bits)
        flipped[0] ^= 1
        flipped[5] ^= 1
        assert bit_accuracy(a, WatermarkMessage(tuple(flipped))) == 0.75

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            bit_accuracy(WatermarkMessage((0, 1)), WatermarkMessage((0, 1, 1)))


class TestDegradation:
    def test_noise_monotone(self):
        accs = {}
        for sigma in (0.01, 0.10):
            vals = []
            for seed in range(10):
                img = texture_image(128, 128, 1, seed=500 + seed)
                msg = WatermarkMessage.random(16, seed=seed)
                marked = embed(img, msg)
                noisy = apply_distortion(
                    marked, DistortionSpec("gaussian_noise", noise_sigma=sigma),
                    seed=seed)
                vals.append(bit_accuracy(msg, extract(noisy, 16)))
            accs[sigma] = np.mean(vals)
        assert accs[0.01] > accs[0.10]
        assert accs[0.01] == 1.0
