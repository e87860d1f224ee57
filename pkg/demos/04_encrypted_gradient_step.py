"""One gradient step of a linear model, computed on encrypted weights and data."""

import numpy as np

from cryptonet.she import decrypt, encrypt, keygen, training_params
from cryptonet.train import (
    decode_step_output,
    encode_step_inputs,
    encrypted_gradient_step,
    fixed_point_gradient_step,
    plan_gradient_step,
)

rng = np.random.default_rng(4)
params = training_params()
keys = keygen(params, rng)
plan = plan_gradient_step(params, features=2, batch=4, learning_rate=0.125)

w = np.array([0.5, -1.0])
x = rng.uniform(-1, 1, (4, 2))
y = x @ np.array([1.0, 0.5])
wm, xm, ym = encode_step_inputs(plan, w, x, y)


def enc(m):
    return encrypt(m, keys, rng, params)


out = encrypted_gradient_step(plan, [enc(v) for v in wm], [[enc(v) for v in row] for row in xm],
                              [enc(v) for v in ym], keys.public())
got = [decrypt(c, keys).value for c in out]
assert got == fixed_point_gradient_step(plan, wm, xm, ym)
real = w - 0.125 * 2 / 4 * ((x @ w - y) @ x)
print("encrypted step:", decode_step_output(plan, got))
print("real step:     ", real)
