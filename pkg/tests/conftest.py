import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes


def reference_encrypt(pt: bytes, key: bytes) -> bytes:
    enc = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return enc.update(pt) + enc.finalize()


def _gmul(a, b):
    p = 0
    for _ in range(8):
        if b & 1:
            p ^= a
        hi = a & 0x80
        a = (a << 1) & 0xFF
        if hi:
            a ^= 0x1B
        b >>= 1
    return p


def _reference_sbox():
    # inverse via x^254, affine via the 0x1F circulant matrix
    table = []
    for x in range(256):
        inv = 1
        for _ in range(254):
            inv = _gmul(inv, x)
        inv = inv if x else 0
        out = 0
        for bit in range(8):
            v = 0
            for k in (0, 4, 5, 6, 7):
                v ^= (inv >> ((bit + k) % 8)) & 1
            out |= v << bit
        table.append(out ^ 0x63)
    return table


REFERENCE_SBOX = _reference_sbox()


def reference_key_words(key: bytes) -> list[int]:
    """AES-128 key schedule as 44 big-endian 32-bit words."""
    w = [int.from_bytes(key[4 * i:4 * i + 4], "big") for i in range(4)]
    rcon = 1
    for i in range(4, 44):
        t = w[-1]
        if i % 4 == 0:
            t = ((t << 8) | (t >> 24)) & 0xFFFFFFFF
            t = int.from_bytes(bytes(REFERENCE_SBOX[b] for b in t.to_bytes(4, "big")), "big")
            t ^= rcon << 24
            rcon = _gmul(rcon, 2)
        w.append(w[i - 4] ^ t)
    return w


def two_pass_pearson(x, y) -> float:
    x = [float(v) for v in x]
    y = [float(v) for v in y]
    mx, my = sum(x) / len(x), sum(y) / len(y)
    sxy = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = sum((a - mx) ** 2 for a in x)
    syy = sum((b - my) ** 2 for b in y)
    return sxy / (sxx * syy) ** 0.5


def popcount(v: int) -> int:
    return bin(v).count("1")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
