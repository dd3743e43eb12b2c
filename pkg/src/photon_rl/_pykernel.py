"""Pure-Python tree-PS episode loop.

Reference twin of ``_ckernel.pyx``: the same arithmetic in the same order
with the same random draws, so both backends produce bit-identical results
for a given generator state.  Keep the two files in lock-step.
"""
import math

QUARTER_PI = math.pi / 4
HALF_PI = math.pi / 2
ATANH_LIMIT = 1.0 - 1e-12
MAX_ATTEMPTS = 65  # first shot plus 64 re-injections


class KernelError(RuntimeError):
    pass


def _clamp(th):
    if th < 0.0:
        return 0.0
    if th > HALF_PI:
        return HALF_PI
    return th


def run_trials(
    next_state, reward, terminal, start, max_steps, depth, n_actions,
    eta, gamma, damping_period, sigma, per_shot, defrag_period,
    chi, theta, action_map, cum, visited, counters,
    rng, n_trials, out_steps, out_reward,
):
    S = next_state.shape[0]
    A = n_actions
    M = (1 << depth) - 1
    L = 1 << depth
    nxt = next_state.tolist()
    rew = reward.tolist()
    term = terminal.tolist()
    chi_l = chi.ravel().tolist()
    th_l = theta.ravel().tolist()
    amap = action_map.ravel().tolist()
    cum_l = cum.ravel().tolist()
    vis = visited.tolist()
    t = int(counters[0])
    trials = int(counters[1])

    adjust_noise = sigma > 0.0 and not per_shot
    shot_noise = sigma > 0.0 and per_shot
    decay = 1.0 - eta
    normal = rng.standard_normal
    uniform = rng.random
    tanh, sin = math.tanh, math.sin

    last_t = [0] * (S * M)
    gsign = [0.0] * (S * M)
    in_list = [False] * (S * M)
    touched = []
    e_last = [0] * (S * A)
    e_in = [False] * (S * A)
    e_touched = []

    def write(idx):
        th = QUARTER_PI * (1.0 + tanh(chi_l[idx]))
        if adjust_noise:
            th = _clamp(th + sigma * normal())
        th_l[idx] = th

    def defrag(s):
        base = s * M
        order = amap[s * L: s * L + A]
        new = list(order)
        # stable insertion sort, descending tally
        for i in range(1, A):
            key = new[i]
            kv = cum_l[s * A + key]
            j = i - 1
            while j >= 0 and cum_l[s * A + new[j]] < kv:
                new[j + 1] = new[j]
                j -= 1
            new[j + 1] = key
        if new == order:
            return
        reach = [0.0] * (2 * M + 1)
        reach[0] = 1.0
        for j in range(M):
            sn = sin(QUARTER_PI * (1.0 + tanh(chi_l[base + j])))
            p = sn * sn
            reach[2 * j + 1] = reach[j] * p
            reach[2 * j + 2] = reach[j] * (1.0 - p)
        pos = [0] * A
        for i in range(A):
            pos[order[i]] = i
        sums = [0.0] * (2 * L - 1)
        for i in range(L):
            sums[M + i] = reach[M + pos[new[i]]] if i < A else reach[M + i]
        for j in range(M - 1, -1, -1):
            sums[j] = sums[2 * j + 1] + sums[2 * j + 2]
        for j in range(M):
            up, down = sums[2 * j + 1], sums[2 * j + 2]
            if down == 0.0:
                th = HALF_PI if up > 0.0 else QUARTER_PI
            else:
                th = math.atan(math.sqrt(up / down))
            x = 4.0 * th / math.pi - 1.0
            if x > ATANH_LIMIT:
                x = ATANH_LIMIT
            elif x < -ATANH_LIMIT:
                x = -ATANH_LIMIT
            chi_l[base + j] = math.atanh(x)
        for j in range(M):
            write(base + j)
        for i in range(A):
            amap[s * L + i] = new[i]

    for trial in range(n_trials):
        for idx in touched:
            in_list[idx] = False
        touched.clear()
        for e in e_touched:
            e_in[e] = False
        e_touched.clear()
        s = start
        steps = 0
        total = 0.0
        while True:
            base = s * M
            if not vis[s]:
                vis[s] = 1
                for j in range(M):
                    write(base + j)
            for _attempt in range(MAX_ATTEMPTS):
                node = 0
                leaf = 0
                for _k in range(depth):
                    th = th_l[base + node]
                    if shot_noise:
                        th = _clamp(th + sigma * normal())
                    sn = sin(th)
                    bit = 0 if uniform() < sn * sn else 1
                    leaf = 2 * leaf + bit
                    node = 2 * node + 1 + bit
                a = amap[s * L + leaf]
                if a >= 0:
                    break
            else:
                raise KernelError("photon hit unassigned modes on every re-injection")
            node = 0
            for k in range(depth):
                bit = (leaf >> (depth - 1 - k)) & 1
                idx = base + node
                if not in_list[idx]:
                    in_list[idx] = True
                    touched.append(idx)
                last_t[idx] = t
                gsign[idx] = 1.0 if bit == 0 else -1.0
                node = 2 * node + 1 + bit
            e = s * A + a
            if not e_in[e]:
                e_in[e] = True
                e_touched.append(e)
            e_last[e] = t

            r = rew[s][a]
            done = term[s][a]
            s_next = nxt[s][a]
            steps += 1
            if r != 0.0:
                total += r
                for idx in touched:
                    g = decay ** (t - last_t[idx])
                    if g > 0.0:
                        chi_l[idx] += gsign[idx] * g * r
                        write(idx)
                for e in e_touched:
                    g = decay ** (t - e_last[e])
                    if g > 0.0:
                        cum_l[e] += g * r
            t += 1
            if t % damping_period == 0 and gamma != 1.0:
                for s2 in range(S):
                    if vis[s2]:
                        for j in range(s2 * M, s2 * M + M):
                            if chi_l[j] != 0.0:
                                chi_l[j] *= gamma
                                write(j)
            s = s_next
            if done or steps >= max_steps:
                break
        out_steps[trial] = steps
        out_reward[trial] = total
        trials += 1
        if defrag_period > 0 and trials % defrag_period == 0:
            for s2 in range(S):
                if vis[s2]:
                    defrag(s2)

    chi.ravel()[:] = chi_l
    theta.ravel()[:] = th_l
    action_map.ravel()[:] = amap
    cum.ravel()[:] = cum_l
    visited[:] = vis
    counters[0] = t
    counters[1] = trials
