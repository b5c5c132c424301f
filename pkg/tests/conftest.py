import numpy as np
import pytest

from iianet.tensor import make_rng


@pytest.fixture
def rng():
    return make_rng(1234)


def naive_conv(x, w, stride, pad, dilation, groups, bias=None):
    """Direct nested-loop cross-correlation, independent of the im2col path."""
    b, cin, h, wd = x.shape
    cout, cpg, kh, kw = w.shape
    sh, sw = stride
    ph, pw = pad
    dh, dw = dilation
    ho = (h + 2 * ph - dh * (kh - 1) - 1) // sh + 1
    wo = (wd + 2 * pw - dw * (kw - 1) - 1) // sw + 1
    xp = np.zeros((b, cin, h + 2 * ph, wd + 2 * pw))
    xp[:, :, ph : ph + h, pw : pw + wd] = x
    out = np.zeros((b, cout, ho, wo))
    opg = cout // groups
    for n in range(b):
        for o in range(cout):
            g = o // opg
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0
                    for c in range(cpg):
                        for u in range(kh):
                            for v in range(kw):
                                acc += w[o, c, u, v] * xp[n, g * cpg + c, i * sh + u * dh, j * sw + v * dw]
                    out[n, o, i, j] = acc + (bias[o] if bias is not None else 0.0)
    return out


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
