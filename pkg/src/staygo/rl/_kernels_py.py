"""Numpy implementation of the Q-network kernels.

Parameters live in one flat float64 vector laid out as
``W1 (h1 x n_in), b1, W2 (h2 x h1), b2, W3 (n_out x h2), b3``; inputs are
one-hot, so a batch of observations is just an integer array of state ids.
The compiled module ``_kernels_cy`` implements the same functions with the
same signatures.
"""
import numpy as np

NAME = "python"


def n_params(sizes):
    n, h1, h2, o = sizes
    return h1 * n + h1 + h2 * h1 + h2 + o * h2 + o


def unpack(theta, sizes):
    n, h1, h2, o = sizes
    shapes = [(h1, n), (h1,), (h2, h1), (h2,), (o, h2), (o,)]
    out, k = [], 0
    for shp in shapes:
        size = int(np.prod(shp))
        out.append(theta[k:k + size].reshape(shp))
        k += size
    return out


def q_values(theta, sizes, obs):
    """Q-values for each observation; returns an array of shape (len(obs), n_out)."""
    W1, b1, W2, b2, W3, b3 = unpack(theta, sizes)
    obs = np.asarray(obs, dtype=np.intp)
    h = np.maximum(W1[:, obs].T + b1, 0.0)
    h = np.maximum(h @ W2.T + b2, 0.0)
    return h @ W3.T + b3


def loss_and_grad(theta, sizes, obs, act, y):
    """Mean Huber loss (delta 1) of Q(obs, act) against y, and its gradient."""
    W1, b1, W2, b2, W3, b3 = unpack(theta, sizes)
    obs = np.asarray(obs, dtype=np.intp)
    act = np.asarray(act, dtype=np.intp)
    B = len(obs)
    rows = np.arange(B)

    z1 = W1[:, obs].T + b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ W2.T + b2
    h2 = np.maximum(z2, 0.0)
    q = h2 @ W3.T + b3

    diff = q[rows, act] - y
    ad = np.abs(diff)
    loss = float(np.mean(np.where(ad < 1.0, 0.5 * diff * diff, ad - 0.5)))

    g = np.clip(diff, -1.0, 1.0) / B
    dq = np.zeros_like(q)
    dq[rows, act] = g
    grad = np.zeros_like(theta)
    gW1, gb1, gW2, gb2, gW3, gb3 = unpack(grad, sizes)
    gW3[...] = dq.T @ h2
    gb3[...] = dq.sum(0)
    dz2 = (dq @ W3) * (z2 > 0)
    gW2[...] = dz2.T @ h1
    gb2[...] = dz2.sum(0)
    dz1 = (dz2 @ W2) * (z1 > 0)
    np.add.at(gW1.T, obs, dz1)
    gb1[...] = dz1.sum(0)
    return loss, grad


def clip_grad_norm(grad, max_norm):
    """Scale ``grad`` in place so its global L2 norm is at most ``max_norm``."""
    norm = float(np.sqrt(np.dot(grad, grad)))
    coef = max_norm / (norm + 1e-6)
    if coef < 1.0:
        grad *= coef
    return norm


def adam_update(theta, grad, m, v, t, lr, beta1, beta2, eps):
    """One Adam step (``t`` is the 1-based step count after this update)."""
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    bc1 = 1.0 - beta1 ** t
    bc2 = 1.0 - beta2 ** t
    denom = np.sqrt(v) / np.sqrt(bc2) + eps
    theta -= (lr / bc1) * m / denom


def train_loop(theta, target, adam_m, adam_v, counters, sizes,
               buf_obs, buf_act, buf_rew, buf_next, buf_done, buf_state,
               reward_table, eps_u, rand_act, batch_u,
               timesteps, batch_size, lr, gamma, target_interval,
               eps_start, eps_end, exploration_fraction, max_grad_norm,
               train_freq, learning_starts, beta1, beta2, adam_eps):
    """Run ``timesteps`` epsilon-greedy interactions with the episodic point-of-interest walk.

    The walk visits states 0..n-1 in order and restarts after the last one;
    action ``a`` in state ``s`` earns ``reward_table[s, a]``. After the first
    ``learning_starts`` steps of this run, one minibatch update is applied every
    ``train_freq`` steps; the target network is copied every
    ``target_interval`` total steps (counted across runs). Random numbers are supplied
    by the caller. ``counters`` holds [adam step, total env steps, gradient
    steps]; ``buf_state`` holds [write position, size]. Everything is updated
    in place.
    """
    n_states = reward_table.shape[0]
    capacity = buf_obs.shape[0]
    all_states = np.arange(n_states)
    next_v = q_values(target, sizes, all_states).max(axis=1)
    explore = exploration_fraction * timesteps
    s = 0
    g = 0
    for step in range(timesteps):
        if step < explore:
            eps = eps_start + (eps_end - eps_start) * (step / explore)
        else:
            eps = eps_end
        if eps_u[step] < eps:
            a = int(rand_act[step])
        else:
            a = int(np.argmax(q_values(theta, sizes, [s])[0]))
        done = s == n_states - 1
        pos = int(buf_state[0])
        buf_obs[pos] = s
        buf_act[pos] = a
        buf_rew[pos] = reward_table[s, a]
        buf_next[pos] = s if done else s + 1
        buf_done[pos] = done
        buf_state[0] = (pos + 1) % capacity
        buf_state[1] = min(int(buf_state[1]) + 1, capacity)
        counters[1] += 1
        total = int(counters[1])

        size = int(buf_state[1])
        if step >= learning_starts and (step + 1) % train_freq == 0 and size >= batch_size:
            u = batch_u[g * batch_size:(g + 1) * batch_size]
            g += 1
            idx = np.minimum((u * size).astype(np.intp), size - 1)
            y = buf_rew[idx] + np.where(buf_done[idx] != 0, 0.0, gamma * next_v[buf_next[idx]])
            _, grad = loss_and_grad(theta, sizes, buf_obs[idx], buf_act[idx], y)
            clip_grad_norm(grad, max_grad_norm)
            counters[0] += 1
            counters[2] += 1
            adam_update(theta, grad, adam_m, adam_v, int(counters[0]), lr, beta1, beta2, adam_eps)
        if total % target_interval == 0:
            target[:] = theta
            next_v = q_values(target, sizes, all_states).max(axis=1)
        s = 0 if done else s + 1
