import math

import numpy as np
import pytest

from gaugeflow.flowfield import (
    DivergenceError, GaugeFlowModel, ModelKind, PlainFlowModel, build_model,
    gauge_layer_dims, gauge_total_params, integrate, load_model,
    mlp_dims_param_count, param_count, plain_matched_width, save_model,
    velocity, velocity_backward, velocity_with_cache,
)
from gaugeflow.nn import mlp_backward, mlp_forward
from gaugeflow.rng import Prng

from fdcheck import probe_params


def _zero_net(net):
    for p in net.parameters():
        p[:] = 0.0


def _zero_last_layer(net):
    net.weights[-1][:] = 0.0
    net.biases[-1][:] = 0.0


# -- construction -----------------------------------------------------------


def test_build_gauge_n3():
    m = build_model(ModelKind.GAUGE_THETA, 3, seed=0)
    assert m.v_theta.layer_dims == [4, 64, 64, 3]
    assert m.a_net.layer_dims == [4, 64, 64, 9]
    assert m.v_nu.layer_dims == [4, 64, 64, 3]
    assert m.alpha_net.layer_dims == [1, 16, 1]


def test_build_gauge_width_rule():
    assert build_model(ModelKind.GAUGE_THETA, 16, 0).v_theta.layer_dims == [17, 32, 32, 16]
    assert build_model(ModelKind.GAUGE_NU, 10, 0).v_theta.layer_dims == [11, 64, 64, 10]
    assert build_model(ModelKind.GAUGE_NU, 11, 0).v_theta.layer_dims == [12, 32, 32, 11]


def test_build_deterministic():
    a = build_model(ModelKind.GAUGE_NU, 5, seed=3)
    b = build_model(ModelKind.GAUGE_NU, 5, seed=3)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa, pb)


def test_build_rejects_small_dim():
    with pytest.raises(ValueError):
        build_model(ModelKind.PLAIN_BASELINE, 1, 0)


def test_kind_parse():
    assert ModelKind.parse("gauge-theta") is ModelKind.GAUGE_THETA
    with pytest.raises(ValueError):
        ModelKind.parse("gauge")


# -- parameter counts -------------------------------------------------------


def test_param_count_gauge_n3():
    assert param_count(build_model(ModelKind.GAUGE_THETA, 3, 0)) == 14464
    assert param_count(build_model(ModelKind.GAUGE_NU, 3, 0)) == 14464


def test_param_count_plain_baseline_n3():
    assert param_count(build_model(ModelKind.PLAIN_BASELINE, 3, 0)) == 34051


def test_param_count_variants_equal():
    for n in range(2, 33):
        assert gauge_total_params(n) == param_count(build_model(ModelKind.GAUGE_THETA, n, 0))


def test_matched_width_minimal():
    for n in range(2, 33):
        w = plain_matched_width(n)
        target = gauge_total_params(n)
        assert mlp_dims_param_count([n + 1, w, w, w, n]) >= target
        assert mlp_dims_param_count([n + 1, w - 1, w - 1, w - 1, n]) < target


# -- velocity forward ------------------------------------------------------


def test_gauge_reduces_to_plain_when_a_zero():
    for kind in (ModelKind.GAUGE_THETA, ModelKind.GAUGE_NU):
        m = build_model(kind, 3, seed=5)
        _zero_net(m.a_net)
        x = Prng(1).normals(3)
        v = velocity(m, x, 0.3)
        vt, _ = mlp_forward(m.v_theta, np.append(x, 0.3))
        assert np.array_equal(v, vt)


def test_gauge_reduces_to_plain_when_alpha_zero():
    m = build_model(ModelKind.GAUGE_THETA, 4, seed=6)
    _zero_last_layer(m.alpha_net)
    x = Prng(2).normals(4)
    v = velocity(m, x, 0.7)
    vt, _ = mlp_forward(m.v_theta, np.append(x, 0.7))
    assert np.array_equal(v, vt)


@pytest.mark.parametrize("kind", [ModelKind.GAUGE_THETA, ModelKind.GAUGE_NU])
def test_gauge_correction_orthogonal_to_v_nu(kind):
    m = build_model(kind, 5, seed=9)
    for i in range(20):
        x = Prng(100 + i).normals(5)
        t = Prng(200 + i).uniform()
        v, cache = velocity_with_cache(m, x, t)
        corr = v - cache.v_theta[0]
        vn = cache.v_nu[0]
        denom = np.linalg.norm(vn) * np.linalg.norm(corr) + 1e-30
        assert abs(vn @ corr) / denom < 1e-10


def test_velocity_batch_matches_single():
    m = build_model(ModelKind.GAUGE_NU, 4, seed=11)
    xs = Prng(3).normals(6 * 4).reshape(6, 4)
    ts = Prng(4).uniforms(6)
    vb = velocity(m, xs, ts)
    for i in range(6):
        assert np.allclose(vb[i], velocity(m, xs[i], ts[i]), rtol=0, atol=1e-14)


def test_velocity_plain():
    m = build_model(ModelKind.PLAIN_BASELINE, 3, seed=2)
    x = Prng(5).normals(3)
    v = velocity(m, x, 0.25)
    direct, _ = mlp_forward(m.net, np.append(x, 0.25))
    assert np.array_equal(v, direct)


def test_velocity_dim_mismatch():
    m = build_model(ModelKind.PLAIN_BASELINE, 3, seed=2)
    with pytest.raises(ValueError):
        velocity(m, np.zeros(4), 0.0)


# -- velocity backward -------------------------------------------------------


def test_backward_zero_grad():
    m = build_model(ModelKind.GAUGE_THETA, 3, seed=1)
    _, cache = velocity_with_cache(m, Prng(1).normals(3), 0.5)
    grads = velocity_backward(m, cache, np.zeros(3))
    assert all(np.all(g == 0.0) for g in grads)


def test_backward_with_a_zeroed_structure():
    # with A == 0 the theta gradients match a bare MLP backward, the alpha
    # gradient vanishes (it multiplies a zero correction), and the gauge-net
    # gradient keeps the product-rule term
    m = build_model(ModelKind.GAUGE_THETA, 3, seed=7)
    _zero_net(m.a_net)
    x = Prng(8).normals(3)
    go = Prng(9).normals(3)
    _, cache = velocity_with_cache(m, x, 0.4)
    grads = velocity_backward(m, cache, go)

    n_vt = len(m.v_theta.parameters())
    n_a = len(m.a_net.parameters())
    n_vn = len(m.v_nu.parameters())
    _, plain_cache = mlp_forward(m.v_theta, np.append(x, 0.4))
    plain_grads, _ = mlp_backward(m.v_theta, plain_cache, go)
    for g, pg in zip(grads[:n_vt], plain_grads):
        assert np.array_equal(g, pg)
    a_grads = grads[n_vt:n_vt + n_a]
    assert any(np.any(g != 0.0) for g in a_grads)
    vn_grads = grads[n_vt + n_a:n_vt + n_a + n_vn]
    assert all(np.all(g == 0.0) for g in vn_grads)
    al_grads = grads[n_vt + n_a + n_vn:]
    assert all(np.all(g == 0.0) for g in al_grads)


@pytest.mark.parametrize("kind", [ModelKind.GAUGE_THETA, ModelKind.GAUGE_NU,
                                  ModelKind.PLAIN_BASELINE])
def test_backward_matches_fd(kind):
    m = build_model(kind, 3, seed=13)
    x = Prng(14).normals(3)
    go = Prng(15).normals(3)
    t = 0.62

    def loss():
        return float(go @ velocity(m, x, t))

    _, cache = velocity_with_cache(m, x, t)
    grads = velocity_backward(m, cache, go)
    probe_params(loss, m.parameters(), grads, 100, Prng(16), 1e-4)


def test_backward_covers_every_network():
    # gradient mass reaches all four sub-networks for both gauge variants
    for kind in (ModelKind.GAUGE_THETA, ModelKind.GAUGE_NU):
        m = build_model(kind, 3, seed=17)
        _, cache = velocity_with_cache(m, Prng(18).normals(3), 0.3)
        grads = velocity_backward(m, cache, Prng(19).normals(3))
        offset = 0
        for name, net in m.networks():
            block = grads[offset:offset + len(net.parameters())]
            assert any(np.any(g != 0.0) for g in block), f"{kind}: no gradient in {name}"
            offset += len(net.parameters())


def test_backward_batch_matches_sum_of_singles():
    m = build_model(ModelKind.GAUGE_NU, 3, seed=23)
    xs = Prng(24).normals(4 * 3).reshape(4, 3)
    ts = Prng(25).uniforms(4)
    gos = Prng(26).normals(4 * 3).reshape(4, 3)
    _, cache = velocity_with_cache(m, xs, ts)
    grads = velocity_backward(m, cache, gos)
    acc = [np.zeros_like(g) for g in grads]
    for i in range(4):
        _, ci = velocity_with_cache(m, xs[i], ts[i])
        gi = velocity_backward(m, ci, gos[i])
        for a, g in zip(acc, gi):
            a += g
    for a, g in zip(acc, grads):
        assert np.allclose(a, g, rtol=1e-12, atol=1e-13)


def test_backward_rejects_foreign_cache():
    a = build_model(ModelKind.GAUGE_THETA, 3, seed=1)
    b = build_model(ModelKind.GAUGE_THETA, 3, seed=2)
    _, cache = velocity_with_cache(a, np.zeros(3), 0.1)
    with pytest.raises(ValueError):
        velocity_backward(b, cache, np.zeros(3))


# -- integration --------------------------------------------------------------


def test_integrate_zero_field_constant():
    m = build_model(ModelKind.PLAIN_BASELINE, 2, seed=0)
    _zero_net(m.net)
    x0 = np.array([1.5, -2.5])
    traj = integrate(m, x0, steps=7)
    assert traj.shape == (8, 2)
    assert np.array_equal(traj[-1], x0)


def test_integrate_exponential_decay_rk4():
    traj = integrate(lambda x, t: -x, np.array([1.0, 1.0]), steps=10, method="rk4")
    assert abs(traj[-1][0] - math.exp(-1.0)) < 1e-5


def test_integrate_rk4_beats_euler():
    x0 = np.array([1.0])
    exact = math.exp(-1.0)
    err_euler = abs(integrate(lambda x, t: -x, x0, 10, "euler")[-1][0] - exact)
    err_rk4 = abs(integrate(lambda x, t: -x, x0, 10, "rk4")[-1][0] - exact)
    assert err_rk4 < err_euler / 100.0


def test_integrate_rk4_convergence_order():
    x0 = np.array([1.0])
    exact = math.exp(-1.0)
    e10 = abs(integrate(lambda x, t: -x, x0, 10, "rk4")[-1][0] - exact)
    e20 = abs(integrate(lambda x, t: -x, x0, 20, "rk4")[-1][0] - exact)
    order = math.log2(e10 / e20)
    assert order >= 3.5


def test_integrate_reports_divergence_step():
    def blow_up(x, t):
        return x * 1e200

    with pytest.raises(DivergenceError, match="step"):
        integrate(blow_up, np.array([1.0]), steps=5, method="euler")


def test_integrate_validates_args():
    with pytest.raises(ValueError):
        integrate(lambda x, t: -x, np.array([1.0]), steps=0)
    with pytest.raises(ValueError):
        integrate(lambda x, t: -x, np.array([1.0]), steps=5, method="heun")


# -- checkpoints --------------------------------------------------------------


@pytest.mark.parametrize("kind", list(ModelKind))
def test_model_checkpoint_roundtrip(kind, tmp_path):
    m = build_model(kind, 3, seed=31)
    path = tmp_path / "m.json"
    save_model(m, path, seed=31)
    loaded = load_model(path)
    assert loaded.variant is ModelKind(kind)
    x = Prng(32).normals(3)
    assert np.array_equal(velocity(m, x, 0.5), velocity(loaded, x, 0.5))


def test_model_checkpoint_kind_dim_mismatch(tmp_path):
    m = build_model(ModelKind.GAUGE_THETA, 3, seed=1)
    path = tmp_path / "m.json"
    save_model(m, path)
    import json
    doc = json.loads(path.read_text())
    doc["model_kind"] = "plain-baseline"  # dims no longer consistent
    path.write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        load_model(path)
