"""File formats, synthetic scenes, and augmentation determinism."""

import os

import numpy as np
import pytest

from mptdeblur.data import (
    SCENES,
    FormatError,
    augment_crop,
    bilinear_resize,
    list_pairs,
    load_image,
    load_store,
    load_tensor,
    mask_region_blur,
    save_image,
    save_store,
    save_tensor,
    synth_pair,
    write_dataset,
)
from mptdeblur.frequency import gaussian_reblur
from mptdeblur.rng import Rng


class TestImageFiles:
    def test_ppm_roundtrip_bit_exact(self, tmp_path):
        img = (Rng(1).bulk_u64(12 * 10 * 3) % 256).reshape(12, 10, 3) / 255.0
        p = tmp_path / "x.ppm"
        save_image(p, img.astype(np.float32))
        back = load_image(p)
        assert back.shape == (12, 10, 3)
        assert np.array_equal(
            np.rint(back * 255).astype(np.uint8), np.rint(img * 255).astype(np.uint8)
        )
        # second write is byte-identical
        p2 = tmp_path / "y.ppm"
        save_image(p2, back)
        assert p.read_bytes() == p2.read_bytes()

    def test_pgm_roundtrip(self, tmp_path):
        img = (Rng(2).bulk_u64(7 * 9) % 256).reshape(7, 9, 1) / 255.0
        p = tmp_path / "m.pgm"
        save_image(p, img)
        back = load_image(p)
        assert back.shape == (7, 9, 1)
        assert np.allclose(back, np.rint(img * 255) / 255.0, atol=1e-7)

    def test_2d_array_accepted_on_save(self, tmp_path):
        p = tmp_path / "g.pgm"
        save_image(p, np.zeros((4, 5)))
        assert load_image(p).shape == (4, 5, 1)

    def test_values_clamped_and_quantized(self, tmp_path):
        p = tmp_path / "c.pgm"
        save_image(p, np.array([[[-0.5]], [[1.5]], [[0.5]]]))
        back = load_image(p)
        assert back[0, 0, 0] == 0.0
        assert back[1, 0, 0] == 1.0
        assert abs(back[2, 0, 0] - 128 / 255) < 1e-7

    def test_header_comments_allowed(self, tmp_path):
        p = tmp_path / "c.pgm"
        p.write_bytes(b"P5\n# made by hand\n2 2\n255\n\x00\x40\x80\xff")
        img = load_image(p)
        assert img.shape == (2, 2, 1)
        assert img[1, 1, 0] == 1.0

    @pytest.mark.parametrize(
        "blob",
        [
            b"P3\n2 2\n255\n",  # ascii variant unsupported
            b"P5\n2 2\n65535\n" + b"\x00" * 8,  # 16-bit maxval
            b"P5\n2 2\n255\n\x00\x01",  # short payload
            b"P5\n-2 2\n255\n" + b"\x00" * 4,
            b"P5\nx 2\n255\n" + b"\x00" * 4,
            b"P5\n2",  # truncated header
            b"GIF89a",
        ],
    )
    def test_malformed_rejected(self, tmp_path, blob):
        p = tmp_path / "bad.img"
        p.write_bytes(blob)
        with pytest.raises(FormatError):
            load_image(p)

    def test_save_rejects_bad_shapes(self, tmp_path):
        with pytest.raises(ValueError):
            save_image(tmp_path / "z.ppm", np.zeros((4, 4, 2)))


class TestTensorContainer:
    def test_tensor_roundtrip_exact(self, tmp_path):
        for dtype in (np.float32, np.float64):
            arr = Rng(3).bulk_normal(60).reshape(3, 4, 5).astype(dtype)
            p = tmp_path / f"t_{np.dtype(dtype).name}.mptt"
            save_tensor(p, arr)
            back = load_tensor(p)
            assert back.dtype == arr.dtype
            assert np.array_equal(back, arr)

    def test_store_roundtrip(self, tmp_path):
        entries = {
            "w": np.ones((2, 3), dtype=np.float32),
            "b": np.arange(3.0),
            "empty": np.zeros((0,), dtype=np.float32),
        }
        meta = {"step": "12", "note": "hello world"}
        p = tmp_path / "s.mptt"
        save_store(p, entries, meta)
        got_e, got_m = load_store(p)
        assert got_m == meta
        assert list(got_e) == list(entries)  # order preserved
        for k in entries:
            assert np.array_equal(got_e[k], entries[k])

    def test_truncation_rejected(self, tmp_path):
        p = tmp_path / "s.mptt"
        save_store(p, {"w": np.ones(5, dtype=np.float32)}, {})
        raw = p.read_bytes()
        for cut in (2, 6, 8, len(raw) - 3):
            q = tmp_path / "cut.mptt"
            q.write_bytes(raw[:cut])
            with pytest.raises(FormatError):
                load_store(q)

    def test_trailing_bytes_rejected(self, tmp_path):
        p = tmp_path / "t.mptt"
        save_tensor(p, np.zeros(3, dtype=np.float32))
        p.write_bytes(p.read_bytes() + b"x")
        with pytest.raises(FormatError):
            load_tensor(p)

    def test_kind_mismatch_rejected(self, tmp_path):
        p = tmp_path / "t.mptt"
        save_tensor(p, np.zeros(3, dtype=np.float32))
        with pytest.raises(FormatError):
            load_store(p)

    def test_bad_magic_and_version(self, tmp_path):
        p = tmp_path / "t.mptt"
        save_tensor(p, np.zeros(3, dtype=np.float32))
        raw = bytearray(p.read_bytes())
        alt = tmp_path / "alt.mptt"
        alt.write_bytes(b"XXXX" + bytes(raw[4:]))
        with pytest.raises(FormatError):
            load_tensor(alt)
        raw[4] = 99  # version low byte
        alt.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            load_tensor(alt)

    def test_int_arrays_rejected_on_save(self, tmp_path):
        with pytest.raises(ValueError):
            save_tensor(tmp_path / "i.mptt", np.zeros(3, dtype=np.int32))


class TestScenes:
    def test_pair_properties(self):
        for scene in SCENES:
            sharp, blur = synth_pair(Rng(5), 32, scene)
            for img in (sharp, blur):
                assert img.shape == (32, 32, 3)
                assert img.dtype == np.float32
                assert img.min() >= 0.0 and img.max() <= 1.0
            assert not np.array_equal(sharp, blur)
            # blurring shrinks total variation
            tv = lambda x: np.abs(np.diff(x, axis=0)).sum() + np.abs(np.diff(x, axis=1)).sum()
            assert tv(blur) < tv(sharp)

    def test_deterministic(self):
        a = synth_pair(Rng(6), 24, "stripes")
        b = synth_pair(Rng(6), 24, "stripes")
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            synth_pair(Rng(0), 8)
        with pytest.raises(ValueError):
            synth_pair(Rng(0), 32, "forest")

    def test_mask_region_blur_blends(self):
        sharp, _ = synth_pair(Rng(7), 32, "checker")
        mask = np.zeros((32, 32))
        mask[:, 16:] = 1.0
        out = mask_region_blur(sharp, mask, Rng(8))
        full, _ = gaussian_reblur(sharp, Rng(8))
        assert np.array_equal(out[:, :14], sharp[:, :14])
        assert np.allclose(out[:, 18:], full[:, 18:], atol=1e-6)

    def test_mask_region_blur_validates(self):
        img = np.zeros((8, 8, 3))
        with pytest.raises(ValueError):
            mask_region_blur(img, np.zeros((4, 4)), Rng(0))
        with pytest.raises(ValueError):
            mask_region_blur(img, np.full((8, 8), 2.0), Rng(0))


class TestResizeAndCrop:
    def test_resize_identity(self):
        img = Rng(9).bulk_uniform(8 * 8 * 3).reshape(8, 8, 3)
        out = bilinear_resize(img, 8, 8)
        assert np.array_equal(out, img)
        assert out is not img

    def test_resize_constant_preserved(self):
        img = np.full((8, 10, 3), 0.4)
        assert np.allclose(bilinear_resize(img, 13, 5), 0.4, atol=1e-12)

    def test_resize_2x_of_ramp_stays_linear(self):
        img = np.arange(8.0).reshape(1, 8, 1).repeat(4, axis=0)
        out = bilinear_resize(img, 4, 16)
        inner = out[0, 2:-2, 0]
        assert np.allclose(np.diff(inner), 0.5, atol=1e-12)

    def test_augment_keeps_pair_aligned(self):
        # feeding the same array twice must yield identical members, whatever
        # scale/flip/crop the rng picked
        img = Rng(10).bulk_uniform(48 * 48 * 3).reshape(48, 48, 3).astype(np.float32)
        for seed in range(6):
            a, b = augment_crop((img, img.copy()), Rng(seed), 16)
            assert a.shape == (16, 16, 3)
            assert np.array_equal(a, b)

    def test_augment_deterministic(self):
        pair = synth_pair(Rng(11), 48)
        a = augment_crop(pair, Rng(3), 24)
        b = augment_crop(pair, Rng(3), 24)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_augment_crop_within_range(self):
        pair = synth_pair(Rng(12), 32)
        for seed in range(8):
            a, _ = augment_crop(pair, Rng(seed), 20)
            assert a.shape == (20, 20, 3)
            assert a.min() >= 0.0 and a.max() <= 1.0

    def test_augment_rejects_oversized_patch(self):
        pair = synth_pair(Rng(13), 32)
        with pytest.raises(ValueError):
            augment_crop(pair, Rng(0), 25)  # 32 * 0.75 = 24 is the safe limit
        with pytest.raises(ValueError):
            augment_crop((pair[0], pair[1][:16]), Rng(0), 8)


class TestDatasetDirs:
    def test_write_and_list(self, tmp_path):
        root = tmp_path / "ds"
        n = write_dataset(root, Rng(0), count=4, size=32, scene="cells")
        assert n == 4
        pairs, warnings = list_pairs(root)
        assert len(pairs) == 4 and warnings == []
        s, b, m = pairs[0]
        assert s.endswith(os.path.join("sharp", "0000.ppm"))
        assert b.endswith(os.path.join("blur", "0000.ppm"))
        assert m is None
        assert load_image(s).shape == (32, 32, 3)

    def test_write_deterministic(self, tmp_path):
        ra, rb = tmp_path / "a", tmp_path / "b"
        write_dataset(ra, Rng(4), count=2, size=32, scene="checker")
        write_dataset(rb, Rng(4), count=2, size=32, scene="checker")
        for sub in ("sharp", "blur"):
            for name in os.listdir(ra / sub):
                assert (ra / sub / name).read_bytes() == (rb / sub / name).read_bytes()

    def test_masks_written_when_requested(self, tmp_path):
        root = tmp_path / "ds"
        write_dataset(root, Rng(5), count=2, size=32, scene="cells", with_mask=True)
        pairs, _ = list_pairs(root)
        assert all(m is not None for _, _, m in pairs)
        assert load_image(pairs[0][2]).shape == (32, 32, 1)

    def test_unpaired_files_warned(self, tmp_path):
        root = tmp_path / "ds"
        write_dataset(root, Rng(6), count=2, size=32, scene="cells")
        os.remove(root / "blur" / "0001.ppm")
        extra = root / "blur" / "9999.ppm"
        save_image(extra, np.zeros((16, 16, 3)))
        pairs, warnings = list_pairs(root)
        assert len(pairs) == 1
        assert any("0001.ppm" in w for w in warnings)
        assert any("9999.ppm" in w for w in warnings)

    def test_missing_layout_rejected(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            list_pairs(tmp_path / "nowhere")
