"""Curve.

Deterministic toy elliptic-curve system parameters for the service provider
and a Schnorr-style signature over them. Explicitly non-production.

The curve is `y² = x³ + b (mod p)` with `p = 6q − 1` for a prime `q`. Since
`p ≡ 2 (mod 3)` the curve is supersingular with exactly `p + 1 = 6q` points,
so multiplying any point by the cofactor 6 lands in the prime-order subgroup.
That gives a known group order without point counting.
"""

# standard
from dataclasses import dataclass
from functools import cached_property
from hashlib import sha256
import random
from typing import Tuple

# external
from Crypto.Util.number import isPrime
from ecpy.curves import Point, WeierstrassCurve

# local
from sgpbft.messages import encode_fields

COFACTOR = 6
DEFAULT_BITS = 61


def _domain(p: int, q: int, b: int, generator: Tuple[int, int], cofactor: int):
    return {
        "name": f"sgpbft-toy-{p.bit_length()}",
        "type": "weierstrass",
        "size": p.bit_length(),
        "field": p,
        "generator": generator,
        "order": q,
        "cofactor": cofactor,
        "a": 0,
        "b": b,
    }


def _int_bytes(value: int, /):
    return value.to_bytes((value.bit_length() + 7) // 8 or 1, "big")


@dataclass(frozen=True)
class SystemParams:
    """Public parameters `{p, q, a, b, P, P_pub, H1, H2}` of the service provider."""

    p: int
    q: int
    a: int
    b: int
    generator: Tuple[int, int]
    public_key: Tuple[int, int]
    cofactor: int = COFACTOR

    @cached_property
    def curve(self):
        """The ecpy curve object for these parameters."""
        return WeierstrassCurve(_domain(self.p, self.q, self.b, self.generator, self.cofactor))

    def point(self, xy: Tuple[int, int], /):
        """Build a point on the curve (raises if it is not on the curve)."""
        return Point(xy[0], xy[1], self.curve)

    @property
    def nonsingular(self):
        """Whether `4a³ + 27b² ≠ 0 (mod p)`."""
        return (4 * self.a**3 + 27 * self.b**2) % self.p != 0

    def h1(self, data: bytes, /):
        """Hash bytes into `Z_q*`."""
        digest = int.from_bytes(sha256(b"H1" + data).digest(), "big")
        return digest % (self.q - 1) + 1

    def h2(self, xy: Tuple[int, int], /):
        """Hash a group element into `Z_q*`."""
        digest = int.from_bytes(
            sha256(b"H2" + encode_fields(_int_bytes(xy[0]), _int_bytes(xy[1]))).digest(), "big"
        )
        return digest % (self.q - 1) + 1

    @property
    def scalar_size(self):
        """Byte width of one scalar modulo `q`."""
        return (self.q.bit_length() + 7) // 8


def sp_init(seed: int, *, bits: int = DEFAULT_BITS):
    """Derive system parameters and the service provider's private key from `seed`.

    Args:
        seed:
            Scenario seed; equal seeds give identical parameters.
        bits:
            Approximate bit length of the field modulus `p`.

    Returns:
        (Tuple[SystemParams, int]): Parameters and the private key `P_pri`.

    Raises:
        (ValueError): If `bits` is too small to host a toy curve.
    """
    if bits < 16:
        raise ValueError("`bits` must be at least 16")
    rng = random.Random(seed)
    low, high = 1 << (bits - 4), 1 << (bits - 3)
    while True:
        q = rng.randrange(low, high) | 1
        if isPrime(q) and isPrime(COFACTOR * q - 1):
            break
    p = COFACTOR * q - 1
    b = rng.randrange(1, p)
    cube_root = pow(3, -1, p - 1)

    while True:
        y = rng.randrange(1, p)
        x = pow((y * y - b) % p, cube_root, p)
        curve = WeierstrassCurve(_domain(p, q, b, (x, y), 1))
        base = Point(x, y, curve)
        doubled = curve.mul_point(2, base)
        if doubled.x == base.x:
            # order 3
            continue
        tripled = curve.add_point(doubled, base)
        if tripled.y == 0:
            # order 6
            continue
        generator = curve.mul_point(2, tripled)
        break

    private_key = rng.randrange(1, q)
    public = curve.mul_point(private_key, generator)
    params = SystemParams(
        p=p,
        q=q,
        a=0,
        b=b,
        generator=(generator.x, generator.y),
        public_key=(public.x, public.y),
    )
    return params, private_key


def _challenge(params: SystemParams, r: Point, message: bytes, /):
    return params.h1(encode_fields(_int_bytes(r.x), _int_bytes(r.y), message))


def schnorr_sign(params: SystemParams, private_key: int, message: bytes, nonce: int, /):
    """Sign `message`; `nonce` must be drawn uniformly from `[1, q)`.

    Returns:
        (bytes): `e ‖ s`, each scalar fixed-width.

    Raises:
        (ValueError): If the nonce is out of range or yields a degenerate signature.
    """
    if not 0 < nonce < params.q:
        raise ValueError("`nonce` must lie in [1, q)")
    curve = params.curve
    r = curve.mul_point(nonce, curve.generator)
    e = _challenge(params, r, message)
    s = (nonce + e * private_key) % params.q
    if s == 0:
        raise ValueError("Degenerate nonce, draw another")
    width = params.scalar_size
    return e.to_bytes(width, "big") + s.to_bytes(width, "big")


def schnorr_verify(params: SystemParams, message: bytes, signature: bytes, /):
    """Whether `signature` is a valid signature of `message` under `P_pub`.

    Total: malformed input returns `False`.
    """
    width = params.scalar_size
    if not isinstance(signature, bytes) or len(signature) != 2 * width:
        return False
    e = int.from_bytes(signature[:width], "big")
    s = int.from_bytes(signature[width:], "big")
    if not (0 < e < params.q and 0 < s < params.q):
        return False
    curve = params.curve
    s_g = curve.mul_point(s, curve.generator)
    neg_e_pub = curve.mul_point(params.q - e, params.point(params.public_key))
    if s_g.x == neg_e_pub.x:
        # sum is the point at infinity or needs doubling
        return False
    r = curve.add_point(s_g, neg_e_pub)
    return _challenge(params, r, message) == e
