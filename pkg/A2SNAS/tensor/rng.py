import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def _mix(z):
    # splitmix64 finalizer; uint64 arithmetic wraps modulo 2**64
    with np.errstate(over='ignore'):
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
        return z ^ (z >> np.uint64(31))


def _fnv1a(name):
    h = _FNV_OFFSET
    for byte in name.encode('utf-8'):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK
    return h


def derive_seed(seed, name):
    """
    Derives the seed of a named sub-stream.

    The result depends only on (seed, name), never on how many streams were derived before.

    :type seed: int
    :param seed: parent seed, interpreted modulo 2**64

    :type name: str
    :param name: stream name, e.g. a parameter path or "split.class3"

    :rtype: int
    """
    z = np.array([(int(seed) ^ _fnv1a(name)) & _MASK], dtype=np.uint64)
    return int(_mix(z + _GAMMA)[0])


class Rng:
    """
    Counter-based SplitMix64 stream.

    The i-th 64-bit draw of a stream is mix(seed + (i + 1) * GAMMA), so draws are identical on
    every platform and a stream can be resumed from (seed, counter).

    :type seed: int
    :param seed: 64-bit seed

    :type counter: int
    :param counter: number of 64-bit values already drawn
    """

    def __init__(self, seed, counter=0):
        self.seed = int(seed) & _MASK
        self.counter = int(counter)

    def spawn(self, name):
        """
        Gets an independent stream for a named consumer.

        :rtype: Rng
        """
        return Rng(derive_seed(self.seed, name))

    def next_uint64(self, n):
        """
        Draws n raw 64-bit values.

        :rtype: np.ndarray
        """
        steps = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over='ignore'):
            return _mix(np.uint64(self.seed) + steps * _GAMMA)

    def uniform(self, n):
        """
        Draws n floats uniformly from [0, 1) with 53 bits of precision.
        """
        return (self.next_uint64(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def normal(self, shape, std=1.0):
        """
        Draws normally distributed values (Box-Muller) with mean 0 and the given standard deviation.

        :type shape: tuple
        :rtype: np.ndarray
        """
        n = int(np.prod(shape, dtype=np.int64))
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        values = np.empty(2 * pairs, dtype=np.float64)
        values[0::2] = radius * np.cos(angle)
        values[1::2] = radius * np.sin(angle)
        return (values[:n] * std).reshape(shape)

    def permutation(self, n):
        """
        Gets a Fisher-Yates shuffle of range(n).

        :rtype: np.ndarray
        """
        order = np.arange(n)
        if n < 2:
            return order
        u = self.uniform(n - 1)
        for i in range(n - 1, 0, -1):
            j = int(u[n - 1 - i] * (i + 1))
            order[i], order[j] = order[j], order[i]
        return order

    def he_normal(self, shape, fan_in):
        """
        Draws He-initialized weights ~ Normal(0, sqrt(2 / fan_in)).
        """
        return self.normal(shape, std=np.sqrt(2.0 / fan_in))

    def state(self):
        return {'seed': self.seed, 'counter': self.counter}

    @classmethod
    def from_state(cls, state):
        return cls(state['seed'], state['counter'])

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"
