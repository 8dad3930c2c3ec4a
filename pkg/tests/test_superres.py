import sys

import numpy as np
import pytest
from conftest import STUB_DETECTOR

from srdet import wire
from srdet.imagebuf import ImageBuffer
from srdet.superres import (
    UpscaleError,
    UpscaleMethod,
    decode_sr_response,
    encode_sr_request,
    upscale,
    upscale_bicubic,
    upscale_nearest,
)


def random_image(rng, w, h):
    return ImageBuffer(rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


class TestUpscaleMethod:
    def test_kinds(self):
        UpscaleMethod("nearest")
        UpscaleMethod("bicubic")
        UpscaleMethod("external", backend_uri="tcp:localhost:9")
        with pytest.raises(ValueError):
            UpscaleMethod("lanczos")

    def test_external_requires_uri(self):
        with pytest.raises(ValueError):
            UpscaleMethod("external")


class TestNearest:
    def test_single_pixel_z3(self):
        img = ImageBuffer.filled(1, 1, (9, 8, 7))
        out = upscale_nearest(img, 3)
        assert out.width == 3 and out.height == 3
        assert np.all(out.pixels == (9, 8, 7))

    def test_block_replication(self):
        rng = np.random.default_rng(3)
        img = random_image(rng, 5, 4)
        out = upscale_nearest(img, 2)
        for y in range(4):
            for x in range(5):
                block = out.pixels[2 * y : 2 * y + 2, 2 * x : 2 * x + 2]
                assert np.all(block == img.pixels[y, x])

    def test_subsample_identity_fuzz(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            w, h = int(rng.integers(1, 30)), int(rng.integers(1, 30))
            zoom = int(rng.integers(2, 5))
            img = random_image(rng, w, h)
            out = upscale_nearest(img, zoom)
            sub = ImageBuffer(out.pixels[::zoom, ::zoom])
            assert sub == img

    def test_zoom_validation(self):
        img = ImageBuffer.filled(2, 2)
        with pytest.raises(ValueError):
            upscale_nearest(img, 1)
        with pytest.raises(ValueError):
            upscale_nearest(img, 2.5)


class TestBicubic:
    def test_constant_image_fixed(self):
        for zoom in (2, 3, 4):
            img = ImageBuffer.filled(6, 5, (77, 123, 200))
            out = upscale_bicubic(img, zoom)
            assert out.width == 6 * zoom and out.height == 5 * zoom
            assert np.all(out.pixels == (77, 123, 200))

    def test_horizontal_ramp_half_steps(self):
        # pixel value = x; a cubic with linear precision reproduces the
        # ramp at half-steps, so quantized interior columns are within 1
        w = 32
        arr = np.tile(np.arange(w, dtype=np.uint8)[None, :, None], (8, 1, 3))
        out = upscale_bicubic(ImageBuffer(arr), 2)
        for j in range(4, 2 * w - 4):
            expected = (j + 0.5) / 2 - 0.5
            got = float(out.pixels[8, j, 0])
            assert abs(got - expected) <= 1.0, (j, got, expected)

    def test_range_stays_in_bounds(self):
        rng = np.random.default_rng(7)
        img = random_image(rng, 12, 9)
        out = upscale_bicubic(img, 2)
        assert out.pixels.min() >= 0 and out.pixels.max() <= 255

    def test_mean_close_to_input(self):
        rng = np.random.default_rng(11)
        img = random_image(rng, 16, 16)
        out = upscale_bicubic(img, 2)
        assert abs(float(out.pixels.mean()) - float(img.pixels.mean())) <= 0.5


class TestDimensionalContract:
    def test_all_methods_fuzz(self):
        rng = np.random.default_rng(13)
        for _ in range(15):
            w, h = int(rng.integers(1, 25)), int(rng.integers(1, 25))
            zoom = int(rng.integers(2, 5))
            img = random_image(rng, w, h)
            for kind in ("nearest", "bicubic"):
                out = upscale(img, zoom, UpscaleMethod(kind))
                assert (out.width, out.height) == (zoom * w, zoom * h)


class TestSrCodec:
    def test_round_trip(self):
        img = ImageBuffer.filled(4, 4, (10, 20, 30))
        req = encode_sr_request(img, 2, request_id=7)
        assert req["type"] == "upscale" and req["zoom"] == 2
        echoed = wire.decode_message(wire.encode_message(req))
        assert wire.image_from_field(echoed["image"]) == img

    def test_response_dimension_check(self):
        img = ImageBuffer.filled(4, 4)
        good = wire.image_response(1, upscale_nearest(img, 2))
        out = decode_sr_response(good, 2, 4, 4, expected_request_id=1)
        assert out.width == 8
        bad = wire.image_response(1, upscale_nearest(img, 3))
        with pytest.raises(wire.WireError, match="expected 8x8"):
            decode_sr_response(bad, 2, 4, 4)

    def test_golden_fixture(self):
        from conftest import GOLDEN_DIR
        from wire_fixtures import fixture_image, fixture_image_x2

        req = encode_sr_request(fixture_image(), 2, request_id=2)
        golden = (GOLDEN_DIR / "upscale_request.jsonl").read_bytes()
        assert wire.encode_message(req) == golden
        reply = wire.decode_message((GOLDEN_DIR / "image_response.jsonl").read_bytes())
        out = decode_sr_response(reply, 2, 4, 4, expected_request_id=2)
        assert out == fixture_image_x2()


class TestExternalMethod:
    def test_through_stub(self):
        uri = f"exec:{sys.executable} {STUB_DETECTOR}"
        img = ImageBuffer.filled(6, 4, (1, 2, 3))
        out = upscale(img, 2, UpscaleMethod("external", backend_uri=uri))
        assert (out.width, out.height) == (12, 8)
        assert np.all(out.pixels == (1, 2, 3))

    def test_backend_failure_wrapped(self):
        method = UpscaleMethod("external", backend_uri="tcp:127.0.0.1:1")
        with pytest.raises(UpscaleError):
            upscale(ImageBuffer.filled(2, 2), 2, method)
