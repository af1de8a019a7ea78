"""Regenerates random_stack_seed42.json from the documented generator."""
import json

M = (1 << 64) - 1


def splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & M
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & M
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & M
    return x ^ (x >> 31)


class XorShift64Star:
    def __init__(self, seed):
        self.s = splitmix64(seed) or 0x9E3779B97F4A7C15

    def next(self):
        s = self.s
        s ^= s >> 12
        s ^= (s << 25) & M
        s ^= s >> 27
        self.s = s
        return (s * 0x2545F4914F6CDD1D) & M

    def uniform(self, lo, hi):
        return lo + (hi - lo) * ((self.next() >> 11) * 2.0**-53)


rng = XorShift64Star(42)
stack = []
for _ in range(5):
    d = rng.uniform(0.5, 1.5)
    v = rng.uniform(0.0, 2.0)
    stack.append((d, v))

rows = ",\n".join('    {"d": %.17g, "V": %.17g}' % lv for lv in stack)
with open("random_stack_seed42.json", "w") as f:
    f.write('{\n  "seed": 42,\n  "layers": 5,\n  "v_range": [0, 2],\n  "d_range": [0.5, 1.5],\n  "stack": [\n%s\n  ]\n}\n' % rows)
