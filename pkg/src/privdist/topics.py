"""Registry of message topic tags.

Every envelope carries a 16-bit topic tag that tells the receiver how to
decode the payload.  Payload kinds:

``u64``   little-endian unsigned 64-bit ring elements (the SecSum ring)
``u128``  128-bit ring elements, each sent as two ``u64`` words (low, high)
``f64``   little-endian IEEE-754 doubles
``bytes`` opaque bytes (setup messages only)

==========  =====  =======  ============================================
tag         value  payload  sent by
==========  =====  =======  ============================================
PING        1      f64      network self-tests and demos
FEATURES    2      bytes    PD-NMF setup: SHA-256 of the ordered features
SHARE       10     u64      SecSum: one additive share, point to point
SUM_SHARE   11     u64      SecSum: a party's share of the sum, broadcast
PRF_KEY     12     u64      PRF SecSum setup: a 128-bit pairwise key
PRF_SUM     13     u64      PRF SecSum: [counter, sum shares...], broadcast
NSS_INPUT   20     u128     NormedSecSum: input share, point to point
NSS_OPEN    21     u128     NormedSecSum: masked opening, broadcast
NSS_OUTPUT  22     u128     NormedSecSum: output share, broadcast
==========  =====  =======  ============================================
"""

from __future__ import annotations

from enum import IntEnum


class Topic(IntEnum):
    PING = 1
    FEATURES = 2
    SHARE = 10
    SUM_SHARE = 11
    PRF_KEY = 12
    PRF_SUM = 13
    NSS_INPUT = 20
    NSS_OPEN = 21
    NSS_OUTPUT = 22


PAYLOAD_KIND = {
    Topic.PING: "f64",
    Topic.FEATURES: "bytes",
    Topic.SHARE: "u64",
    Topic.SUM_SHARE: "u64",
    Topic.PRF_KEY: "u64",
    Topic.PRF_SUM: "u64",
    Topic.NSS_INPUT: "u128",
    Topic.NSS_OPEN: "u128",
    Topic.NSS_OUTPUT: "u128",
}
