"""Bit-accurate AES-128 model, the attacked intermediate value, and the TMR voter.

Blocks and keys are 16-octet ``bytes`` objects with byte 0 as the most
significant (first) octet. The attacked subkey defaults to byte 0.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

BLOCK_SIZE = 16


def _gf_mul(a: int, b: int) -> int:
    out = 0
    while b:
        if b & 1:
            out ^= a
        a = ((a << 1) ^ 0x11B) if a & 0x80 else (a << 1)
        b >>= 1
    return out


def _build_sbox() -> tuple[bytes, bytes]:
    inverse = [0] * 256
    for x in range(1, 256):
        for y in range(1, 256):
            if _gf_mul(x, y) == 1:
                inverse[x] = y
                break
    fwd = bytearray(256)
    for x in range(256):
        b = inverse[x]
        s = b
        for shift in range(1, 5):
            s ^= ((b << shift) | (b >> (8 - shift))) & 0xFF
        fwd[x] = s ^ 0x63
    inv = bytearray(256)
    for x, s in enumerate(fwd):
        inv[s] = x
    return bytes(fwd), bytes(inv)


SBOX, INV_SBOX = _build_sbox()
SBOX_NP = np.frombuffer(SBOX, dtype=np.uint8)
# popcount of every octet
HW8 = np.array([bin(i).count("1") for i in range(256)], dtype=np.uint8)

_RCON = (0x01, 0x02, 0x04, 0x08, 0x10, 0x20, 0x40, 0x80, 0x1B, 0x36)


class PowerModelKind(enum.Enum):
    """What the intermediate register held before latching ``pt ^ key``."""

    HW_ZERO_PREV = "hw"
    HD_PLAINTEXT_PREV = "hd-plaintext"
    HD_CUSTOM_PREV = "hd-custom"


@dataclass(frozen=True)
class PowerModel:
    kind: PowerModelKind = PowerModelKind.HW_ZERO_PREV
    prev: bytes | None = None

    def __post_init__(self):
        if self.kind is PowerModelKind.HD_CUSTOM_PREV:
            if self.prev is None:
                raise ValueError("HD_CUSTOM_PREV requires a previous register value")
            object.__setattr__(self, "prev", as_block(self.prev, "prev"))
        elif self.prev is not None:
            raise ValueError(f"{self.kind.name} takes no previous register value")

    @classmethod
    def parse(cls, name: str | PowerModel | PowerModelKind) -> PowerModel:
        """Accept a model object, an enum member, or a CLI name (``hw``, ``hd-plaintext``)."""
        if isinstance(name, PowerModel):
            return name
        if isinstance(name, PowerModelKind):
            return cls(name)
        try:
            return cls(PowerModelKind(name))
        except ValueError:
            try:
                return cls(PowerModelKind[name.upper()])
            except KeyError:
                raise ValueError(f"unknown power model {name!r}") from None


HW = PowerModel(PowerModelKind.HW_ZERO_PREV)
HD_PLAINTEXT = PowerModel(PowerModelKind.HD_PLAINTEXT_PREV)


def as_block(value, name: str = "block") -> bytes:
    """Coerce ``bytes``/``bytearray``/hex string/uint8 array to a 16-octet block."""
    if isinstance(value, str):
        try:
            value = bytes.fromhex(value)
        except ValueError:
            raise ValueError(f"{name}: not a hex string") from None
    elif isinstance(value, np.ndarray):
        value = value.astype(np.uint8).tobytes()
    else:
        value = bytes(value)
    if len(value) != BLOCK_SIZE:
        raise ValueError(f"{name} must be {BLOCK_SIZE} octets, got {len(value)}")
    return value


def sbox(x: int) -> int:
    return SBOX[x]


def inv_sbox(x: int) -> int:
    return INV_SBOX[x]


def expand_key(key) -> list[bytes]:
    """AES-128 key schedule; returns the 11 round keys, ``rk[0] == key``."""
    key = as_block(key, "key")
    words = [list(key[i:i + 4]) for i in range(0, 16, 4)]
    for i in range(4, 44):
        temp = list(words[i - 1])
        if i % 4 == 0:
            temp = temp[1:] + temp[:1]
            temp = [SBOX[b] for b in temp]
            temp[0] ^= _RCON[i // 4 - 1]
        words.append([a ^ b for a, b in zip(words[i - 4], temp)])
    return [bytes(sum(words[4 * r:4 * r + 4], [])) for r in range(11)]


def _xtime(a: int) -> int:
    return ((a << 1) ^ 0x1B) & 0xFF if a & 0x80 else a << 1


def _mix_columns(s: list[int]) -> list[int]:
    out = [0] * 16
    for c in range(4):
        a = s[4 * c:4 * c + 4]
        t = a[0] ^ a[1] ^ a[2] ^ a[3]
        for r in range(4):
            out[4 * c + r] = a[r] ^ t ^ _xtime(a[r] ^ a[(r + 1) % 4])
    return out


def _shift_rows(s: list[int]) -> list[int]:
    # column-major state: index = 4*col + row
    return [s[4 * ((c + r) % 4) + r] for c in range(4) for r in range(4)]


def encrypt(pt, key) -> bytes:
    """Single-block AES-128 encryption."""
    rk = expand_key(key)
    state = [p ^ k for p, k in zip(as_block(pt, "plaintext"), rk[0])]
    for rnd in range(1, 11):
        state = _shift_rows([SBOX[b] for b in state])
        if rnd != 10:
            state = _mix_columns(state)
        state = [s ^ k for s, k in zip(state, rk[rnd])]
    return bytes(state)


def intermediate_register(pt, key) -> bytes:
    """Value latched by the attacked register in the second clock cycle: ``pt ^ key``."""
    return bytes(a ^ b for a, b in zip(as_block(pt, "plaintext"), as_block(key, "key")))


def hypothesis(pt_byte: int, guess: int, model: PowerModel = HW, byte_index: int = 0) -> int:
    """Predicted bit flips of one register byte for a key guess."""
    if not 0 <= guess <= 255:
        raise ValueError(f"guess must be in 0..255, got {guess}")
    value = pt_byte ^ guess
    if model.kind is PowerModelKind.HD_PLAINTEXT_PREV:
        value ^= pt_byte
    elif model.kind is PowerModelKind.HD_CUSTOM_PREV:
        value ^= model.prev[byte_index]
    return int(HW8[value])


def register_transitions(pts: np.ndarray, key, model: PowerModel = HW) -> np.ndarray:
    """Bitwise register transition for each plaintext row, shape (N, 16) uint8."""
    key_arr = np.frombuffer(as_block(key, "key"), dtype=np.uint8)
    reg = pts ^ key_arr
    if model.kind is PowerModelKind.HD_PLAINTEXT_PREV:
        return reg ^ pts
    if model.kind is PowerModelKind.HD_CUSTOM_PREV:
        return reg ^ np.frombuffer(model.prev, dtype=np.uint8)
    return reg


def popcount_rows(values: np.ndarray) -> np.ndarray:
    """Total set bits per row of a uint8 matrix."""
    return HW8[values].sum(axis=-1, dtype=np.int64)


def majority_vote(a, b, c) -> bytes:
    """Bitwise 2-of-3 vote over three redundant outputs."""
    a, b, c = as_block(a, "a"), as_block(b, "b"), as_block(c, "c")
    return bytes((x & y) | (x & z) | (y & z) for x, y, z in zip(a, b, c))
