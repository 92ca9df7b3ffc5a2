"""Image I/O, color conversion, sampling, and gradient tests."""

import numpy as np
import pytest

from multistitch.exceptions import DecodeError, ImageWriteError
from multistitch.image import (Image, bilinear_sample, gradient_magnitude, load_image,
                               masked_gradient_magnitude, quantize, save_image,
                               to_grayscale)


def test_ppm_p6_decode(tmp_path):
    path = tmp_path / "tiny.ppm"
    payload = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255])
    path.write_bytes(b"P6\n2 2\n255\n" + payload)
    img = load_image(path)
    assert img.shape == (2, 2)
    np.testing.assert_array_equal(img.pixels[0, 0], [255, 0, 0])
    np.testing.assert_array_equal(img.pixels[0, 1], [0, 255, 0])
    np.testing.assert_array_equal(img.pixels[1, 0], [0, 0, 255])
    np.testing.assert_array_equal(img.pixels[1, 1], [255, 255, 255])
    assert img.mask.all()


def test_missing_file_is_decode_error(tmp_path):
    with pytest.raises(DecodeError, match="no-such"):
        load_image(tmp_path / "no-such.png")


def test_unsupported_format_rejected(tmp_path):
    path = tmp_path / "img.bmp"
    from PIL import Image as PILImage
    PILImage.new("RGB", (4, 4)).save(path, format="BMP")
    with pytest.raises(DecodeError):
        load_image(path)


def test_png_round_trip_bit_identical(tmp_path):
    rng = np.random.default_rng(1)
    img = Image(rng.integers(0, 256, size=(13, 17, 3)).astype(float))
    path = tmp_path / "rt.png"
    save_image(img, path)
    back = load_image(path)
    np.testing.assert_array_equal(back.pixels, img.pixels)
    assert back.mask.all()


def test_alpha_channel_encodes_mask(tmp_path):
    rng = np.random.default_rng(2)
    mask = rng.random((9, 11)) > 0.4
    img = Image(rng.integers(0, 256, size=(9, 11, 3)).astype(float), mask)
    path = tmp_path / "masked.png"
    save_image(img, path, with_alpha=True)
    from PIL import Image as PILImage
    alpha = np.asarray(PILImage.open(path))[:, :, 3]
    np.testing.assert_array_equal(alpha == 255, mask)
    back = load_image(path)
    np.testing.assert_array_equal(back.mask, mask)
    np.testing.assert_array_equal(back.pixels, img.pixels)


def test_directory_target_is_write_error(tmp_path):
    img = Image(np.zeros((2, 2, 3)))
    with pytest.raises(ImageWriteError):
        save_image(img, tmp_path)


def test_masked_pixels_store_sentinel():
    px = np.full((2, 2, 3), 77.0)
    mask = np.array([[True, False], [True, True]])
    img = Image(px, mask)
    np.testing.assert_array_equal(img.pixels[0, 1], [0, 0, 0])


def test_quantize_rounds_half_up():
    np.testing.assert_array_equal(quantize(np.array([0.4, 0.5, 126.49, 127.5, 255.7])),
                                  [0, 1, 126, 128, 255])


def test_grayscale_weights():
    img = Image(np.array([[[255.0, 255.0, 255.0], [255.0, 0.0, 0.0]]]))
    gray = to_grayscale(img)
    assert gray[0, 0] == pytest.approx(255.0)
    assert gray[0, 1] == pytest.approx(76.245)


def test_grayscale_masked_pixels_read_zero():
    img = Image(np.full((1, 2, 3), 200.0), np.array([[True, False]]))
    assert to_grayscale(img)[0, 1] == 0.0


def test_gradient_constant_plane_is_zero():
    assert np.all(gradient_magnitude(np.full((6, 7), 3.25)) == 0.0)


def test_gradient_of_ramp():
    xs = np.tile(np.arange(8.0), (5, 1))
    grad = gradient_magnitude(xs)
    np.testing.assert_allclose(grad[:, 1:-1], 1.0)
    np.testing.assert_allclose(grad[:, 0], 0.5)  # replicated border halves the step


def test_gradient_of_vertical_step():
    plane = np.zeros((4, 9))
    plane[:, 5:] = 100.0
    grad = gradient_magnitude(plane)
    assert np.argmax(grad[2]) in (4, 5)
    assert grad.max() == pytest.approx(50.0)


def test_masked_gradient_ignores_invalid_neighbors():
    plane = np.array([[5.0, 900.0, 5.0]])
    mask = np.array([[True, False, True]])
    grad = masked_gradient_magnitude(plane, mask)
    # the 900 sentinel-adjacent value must not leak into valid pixels
    np.testing.assert_array_equal(grad, 0.0)
    full = masked_gradient_magnitude(plane, np.ones_like(mask))
    np.testing.assert_allclose(full, gradient_magnitude(plane))


@pytest.mark.parametrize("x,y", [(0, 0), (3, 2), (4, 3)])
def test_bilinear_integer_coordinates_exact(x, y):
    rng = np.random.default_rng(3)
    img = Image(rng.uniform(0, 255, (4, 5, 3)))
    color, valid = bilinear_sample(img, float(x), float(y))
    assert valid
    np.testing.assert_allclose(color, img.pixels[y, x])


def test_bilinear_midpoint():
    px = np.zeros((1, 2, 3))
    px[0, 1] = 100.0
    img = Image(px)
    color, valid = bilinear_sample(img, 0.5, 0.0)
    assert valid
    np.testing.assert_allclose(color, [50.0, 50.0, 50.0])


def test_bilinear_out_of_bounds_invalid():
    img = Image(np.zeros((3, 3, 3)))
    _, valid = bilinear_sample(img, -0.5, 1.0)
    assert not valid


def test_bilinear_masked_neighbor_invalidates():
    px = np.full((1, 2, 3), 10.0)
    img = Image(px, np.array([[True, False]]))
    _, valid = bilinear_sample(img, 0.5, 0.0)
    assert not valid
    _, valid_on_pixel = bilinear_sample(img, 0.0, 0.0)
    assert valid_on_pixel
