import numpy as np
import pytest

from specdrive.errors import CorruptContainer, EmptyCalibration, RangeMissing
from specdrive.model import LayerSpec, ModelGraph, UNetConfig, build_mlp, build_unet, forward
from specdrive.quant import (
    QuantScheme,
    calibrate,
    load_qgraph,
    payload_bytes,
    qforward,
    quant_report,
    quantize_graph,
    quantize_model,
    round_half_away,
    save_qgraph,
)
from specdrive.weights import generate_weights


def test_symmetric_weight_mapping():
    scheme = QuantScheme.symmetric_for(np.array([-1.0, 0.0, 1.0]))
    assert scheme.zero_point == 0
    assert scheme.scale == pytest.approx(1 / 127)
    q = scheme.quant(np.array([-1.0, 0.0, 1.0]))
    assert list(q) == [-127, 0, 127]


def test_roundtrip_error_bound(rng):
    for _ in range(20):
        w = rng.normal(0, rng.uniform(0.01, 3), 50).astype(np.float32)
        s = QuantScheme.symmetric_for(w)
        back = s.dequant(s.quant(w))
        assert np.abs(back - w).max() <= s.scale / 2 + 1e-12


def test_zero_maps_to_zero_point(rng):
    for _ in range(20):
        lo, hi = sorted(rng.uniform(-5, 5, 2))
        s = QuantScheme.affine_for(lo, hi)
        assert s.quant(np.array([0.0]))[0] == s.zero_point


def test_degenerate_range_widened():
    s = QuantScheme.affine_for(0.0, 0.0)
    assert s.scale > 0
    assert -128 <= s.zero_point <= 127


def test_round_half_away():
    x = np.array([-2.5, -1.5, -0.5, 0.0, 0.5, 1.5, 2.5])
    assert list(round_half_away(x)) == [-3, -2, -1, 0, 1, 2, 3]


def test_requantization_monotone(rng):
    s_out = QuantScheme.affine_for(-1.0, 1.0)
    acc = np.sort(rng.integers(-(2**20), 2**20, 100))
    mult = 1e-6
    q = np.clip(round_half_away(acc * mult) + s_out.zero_point, -128, 127)
    assert (np.diff(q) >= 0).all()


def test_calibrate_records_union(rng):
    g = build_mlp(25, 3)
    w = generate_weights(g, 20)
    a = np.full((4, 25), 0.2, np.float32)
    b = np.full((4, 25), 0.9, np.float32)
    ranges = calibrate(g, w, [a, b])
    lo, hi = ranges["input"]
    assert lo == pytest.approx(0.2) and hi == pytest.approx(0.9)
    # single-sample ranges are a subset of the union
    ra = calibrate(g, w, [a])
    assert ra["input"][0] >= lo and ra["input"][1] <= hi


def test_calibrate_order_invariant(rng):
    g = build_mlp(25, 3)
    w = generate_weights(g, 21)
    samples = [rng.uniform(0, 1, (6, 25)).astype(np.float32) for _ in range(5)]
    r1 = calibrate(g, w, samples)
    r2 = calibrate(g, w, samples[::-1])
    for k in r1:
        assert r1[k] == pytest.approx(r2[k])


def test_calibrate_empty_rejected():
    g = build_mlp(25, 3)
    with pytest.raises(EmptyCalibration):
        calibrate(g, generate_weights(g, 0), [])


def test_quantize_missing_range_rejected(rng):
    g = build_mlp(25, 3)
    w = generate_weights(g, 22)
    ranges = calibrate(g, w, [rng.uniform(0, 1, (4, 25)).astype(np.float32)])
    del ranges["fc1"]
    with pytest.raises(RangeMissing):
        quantize_graph(g, w, ranges)


def small_unet():
    return build_unet(
        UNetConfig(patch_size=16, encoder_depth=2, initial_filters=4,
                   in_channels=5, classes=3)
    )


def test_qforward_tracks_float(rng):
    g = small_unet()
    w = generate_weights(g, 23)
    calib = [rng.uniform(0, 1, (16, 16, 5)).astype(np.float32) for _ in range(4)]
    qg = quantize_model(g, w, calib)
    x = calib[0]
    yq = qforward(qg, x)
    yf = forward(g, x, w)
    assert np.abs(yq.sum(-1) - 1).max() <= 1e-5
    assert (yq.argmax(-1) == yf.argmax(-1)).mean() >= 0.9


def test_qforward_naive_bitwise(rng):
    g = small_unet()
    w = generate_weights(g, 24)
    calib = [rng.uniform(0, 1, (16, 16, 5)).astype(np.float32) for _ in range(2)]
    qg = quantize_model(g, w, calib)
    x = calib[1]
    assert np.array_equal(qforward(qg, x), qforward(qg, x, naive=True))


def test_single_conv_error_bound(rng):
    """Quantized conv output stays within a couple of output LSBs of float."""
    for trial in range(20):
        cin, cout = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        layers = [LayerSpec("c", "conv3", ("input",), cin, cout, kernel=3)]
        g = ModelGraph(layers, meta={"kind": "custom", "config": {}})
        w = generate_weights(g, trial)
        calib = [rng.normal(0, 1, (6, 6, cin)).astype(np.float32) for _ in range(3)]
        qg = quantize_model(g, w, calib)
        x = calib[0]
        yq = qforward(qg, x)
        yf = forward(g, x, w)
        s_out = qg.schemes["c"].scale
        assert np.abs(yq - yf).mean() <= 2 * s_out


def test_zero_input_yields_requantized_bias(rng):
    layers = [LayerSpec("c", "conv3", ("input",), 2, 3, kernel=3)]
    g = ModelGraph(layers, meta={"kind": "custom", "config": {}})
    w = generate_weights(g, 31)
    calib = [rng.normal(0, 1, (4, 4, 2)).astype(np.float32) for _ in range(3)]
    calib.append(np.zeros((4, 4, 2), np.float32))
    qg = quantize_model(g, w, calib)
    y = qforward(qg, np.zeros((4, 4, 2), np.float32))
    # all accumulators see (q - zp) = 0, so output = dequant(requant(bias))
    ql = qg.qlayers["c"]
    out_s = qg.schemes["c"]
    expect_q = np.clip(
        round_half_away(ql.bias * (ql.bias_scale / out_s.scale)) + out_s.zero_point,
        -128, 127,
    )
    expect = (expect_q - out_s.zero_point) * out_s.scale
    assert np.allclose(y, np.broadcast_to(expect, y.shape), atol=1e-7)


def test_identity_impulse_conv_requantizes_input(rng):
    layers = [LayerSpec("c", "conv3", ("input",), 1, 1, kernel=3)]
    g = ModelGraph(layers, meta={"kind": "custom", "config": {}})
    w = {
        "c.weight": np.zeros((3, 3, 1, 1), np.float32),
        "c.bias": np.zeros(1, np.float32),
    }
    w["c.weight"][1, 1, 0, 0] = 1.0
    calib = [rng.uniform(-1, 1, (5, 5, 1)).astype(np.float32) for _ in range(4)]
    qg = quantize_model(g, w, calib)
    x = calib[0]
    y = qforward(qg, x)
    s_in = qg.schemes["input"].scale
    s_out = qg.schemes["c"].scale
    assert np.abs(y - x).max() <= s_in / 2 + s_out / 2 + 1e-6


def test_payload_ratio_reference_unet(rng):
    g = build_unet(UNetConfig())
    w = generate_weights(g, 25)
    calib = [rng.uniform(0, 1, (128, 128, 25)).astype(np.float32) for _ in range(1)]
    qg = quantize_model(g, w, calib)
    rep = quant_report(g, w, qg, calib)
    assert rep.size.float_bytes == 4 * 31_707
    assert rep.size.ratio <= 0.30
    assert rep.size.quantized_bytes == payload_bytes(qg)


def test_container_roundtrip(tmp_path, rng):
    g = small_unet()
    w = generate_weights(g, 26)
    calib = [rng.uniform(0, 1, (16, 16, 5)).astype(np.float32) for _ in range(2)]
    qg = quantize_model(g, w, calib)
    path = tmp_path / "m.sdq"
    save_qgraph(path, qg)
    qg2 = load_qgraph(path)
    x = calib[0]
    assert np.array_equal(qforward(qg, x), qforward(qg2, x))


def test_truncated_qcontainer_rejected(tmp_path, rng):
    g = build_mlp(25, 3)
    w = generate_weights(g, 27)
    qg = quantize_model(g, w, [rng.uniform(0, 1, (4, 25)).astype(np.float32)])
    path = tmp_path / "m.sdq"
    save_qgraph(path, qg)
    data = path.read_bytes()
    (tmp_path / "cut.sdq").write_bytes(data[:-40])
    with pytest.raises(CorruptContainer):
        load_qgraph(tmp_path / "cut.sdq")


def test_mlp_lut_path(rng):
    g = build_mlp(25, 3)
    w = generate_weights(g, 28)
    calib = [rng.uniform(0.05, 0.95, (30, 25)).astype(np.float32) for _ in range(4)]
    qg = quantize_model(g, w, calib)
    assert set(qg.luts) == {"act0", "act1", "act2"}
    x = calib[0]
    yq = qforward(qg, x)
    yf = forward(g, x, w)
    assert (yq.argmax(-1) == yf.argmax(-1)).mean() >= 0.9
