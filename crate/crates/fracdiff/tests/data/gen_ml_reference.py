"""Reference values of the two-parameter Mittag-Leffler function.

Where the cancellation in the power series is affordable (|z|^(1/a) <= 60,
and always for z > 0) the series is summed with enough extra digits to absorb
it.  Otherwise

E_{a,b}(z) = (1/2 pi i) int_C exp(s) s^(a-b) / (s^a - z) ds + sum of residues,
with C the pair of rays arg s = +-phi evaluated by tanh-sinh quadrature in
extended precision.  Poles s_j = |z|^(1/a) exp(i(arg z + 2 pi j)/a) lying in
|arg s| < phi contribute (1/a) s_j^(1-b) exp(s_j).

Usage: python3 gen_ml_reference.py > ml_reference.csv
"""
import sys
import mpmath as mp

mp.mp.dps = 30


def poles(a, z):
    out = []
    if z == 0:
        return out
    r = abs(z) ** (1 / a)
    arg = mp.pi if z < 0 else mp.mpf(0)
    for j in range(-3, 4):
        th = (arg + 2 * mp.pi * j) / a
        if -mp.pi < th <= mp.pi:
            out.append(r * mp.expj(th))
    return out


def rgamma(x):
    if x <= 0 and x == mp.floor(x):
        return mp.mpf(0)
    return 1 / mp.gamma(x)


def ml_series(a, b, z):
    a = mp.mpf(a)
    b = mp.mpf(b)
    z = mp.mpf(z)
    extra = int(float(abs(z) ** (1 / a)) / 2.3) + 10
    with mp.workdps(30 + extra):
        total = mp.mpf(0)
        m = 0
        quiet = 0
        while True:
            t = z ** m * rgamma(a * m + b)
            total += t
            if m > 5 and abs(t) < mp.mpf(10) ** (-40) * max(1, abs(total)):
                quiet += 1
                if quiet > 3:
                    break
            else:
                quiet = 0
            m += 1
        return +total


def log_magnitude(a, b, z):
    """Leading behaviour log((1/a) z^((1-b)/a) exp(z^(1/a))) for z > 0."""
    a = mp.mpf(a)
    b = mp.mpf(b)
    z = mp.mpf(z)
    return z ** (1 / a) + (1 - b) / a * mp.log(z) - mp.log(a)


def ml(a, b, z):
    # far beyond the double range only the fact of overflow matters
    if z > 1 and log_magnitude(a, b, z) > 715:
        return mp.inf
    if z > 0 or abs(z) ** (1 / float(a)) <= 60:
        return ml_series(a, b, z)
    return ml_contour(a, b, z)


def ml_contour(a, b, z, phi=None):
    a = mp.mpf(a)
    b = mp.mpf(b)
    z = mp.mpf(z)
    if z == 0:
        return 1 / mp.gamma(b)
    ps = poles(a, z)
    if phi is None:
        phi = 0.6 * mp.pi
        # keep the rays away from every pole
        for cand in (0.6, 0.7, 0.55, 0.75, 0.65, 0.8, 0.52):
            phi = cand * mp.pi
            if all(abs(abs(mp.arg(p)) - phi) > 0.05 for p in ps):
                break
    total = mp.mpf(0)
    for p in ps:
        if abs(mp.arg(p)) < phi:
            total += p ** (1 - b) * mp.exp(p) / a
    e = mp.expj(phi)

    def f(r):
        s = r * e
        return mp.exp(s) * s ** (a - b) / (s ** a - z) * e

    scale = max(1, abs(z) ** (1 / a))
    pts = [0, scale / 8, scale / 2, scale, 2 * scale, 8 * scale, 40 * scale, mp.inf]
    integ = mp.quad(f, pts)
    # upper ray minus lower ray (conjugate symmetry for real z)
    total += mp.im(integ) / mp.pi
    return mp.re(total)


def main():
    alphas = ["0.3", "0.5", "0.8", "1.2"]
    npts = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
    print("alpha,beta,z,value")
    for a in alphas:
        for b in ["0.5", "1", a]:
            if b == a and a in ("0.5",):
                continue
            for i in range(npts):
                z = mp.mpf(-50) + mp.mpf(70) * i / (npts - 1)
                zf = float(z)
                v = ml(a, b, zf)
                text = "inf" if v == mp.inf else mp.nstr(v, 25)
                print(f"{a},{b},{zf!r},{text}")
                sys.stdout.flush()


if __name__ == "__main__":
    main()
