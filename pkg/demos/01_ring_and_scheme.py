"""Encrypt two integers, add and multiply them blind, and watch the noise budget."""

import numpy as np

from cryptonet.she import decrypt, demo_params, encrypt, he_add, he_mul, keygen, noise_budget

rng = np.random.default_rng(0)
params = demo_params()
keys = keygen(params, rng)
print(f"n={params.n}  log2(q)={params.q.bit_length()}  t={params.t}")

a, b = encrypt(1234, keys, rng), encrypt(56, keys, rng)
print(f"fresh budgets: {noise_budget(a, keys):.1f}, {noise_budget(b, keys):.1f} bits")

s = he_add(a, b)
p = he_mul(a, b, keys.public())  # public evaluation keys only
print(f"a+b -> {decrypt(s, keys).value}  (budget {noise_budget(s, keys):.1f} bits)")
print(f"a*b -> {decrypt(p, keys).value} = 1234*56 mod t = {1234 * 56 % params.t}"
      f"  (budget {noise_budget(p, keys):.1f} bits)")
