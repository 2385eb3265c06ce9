"""Pure-Python tree-search kernel.

One call to `simulate_counts` runs the full budget of select/expand/evaluate/
backup iterations from one round boundary and reports visit statistics under
the targeted loss edge. The compiled kernel in `_kernel.pyx` mirrors this file
operation-for-operation; both must produce bit-identical statistics.

Adversary layers pick a per-round loss pattern minimizing the protocol's
reward (uniform prior); protocol layers pick an output per distinct input key
maximizing it (policy prior). Rewards are +-1 at the end of the last round.
"""

from __future__ import annotations

from itertools import combinations
from math import sqrt

CONSENSUS = 0
ATOMIC_COMMIT = 1


class EngineCtx:
    """Precomputed, immutable-per-call search context."""

    def __init__(self, n, r, d, k, x, lost, first_init, spec_kind, min_crash_round,
                 c_puct, priors, frozen_choice):
        self.n = n
        self.r = r
        self.d = d
        self.k = k
        self.x = x
        self.lost = lost
        self.first_init = first_init
        self.spec_kind = spec_kind
        self.min_crash_round = min_crash_round
        self.c_puct = c_puct
        self.priors = priors  # list over key index -> list of floats (legal-output order)
        self.frozen_choice = frozen_choice  # list over key index -> choice index or -1
        self.round1_keys = x * (x + 1) ** (n - 1)
        self.keys_per_round = k * (k + 1) ** (n - 1)

    def key_index(self, round_, own, others):
        if round_ == 1:
            base = self.x + 1
            idx = own - self.first_init
            for s in others:
                idx = idx * base + (self.x if s == self.lost else s - self.first_init)
            return idx
        base = self.k + 1
        idx = own - self.d
        for s in others:
            idx = idx * base + (self.k if s == self.lost else s - self.d)
        return self.round1_keys + (round_ - 2) * self.keys_per_round + idx

    def out_width(self, round_):
        return self.d if round_ == self.r else self.k

    def output_id(self, round_, choice):
        return choice if round_ == self.r else self.d + choice


class AdvNode:
    __slots__ = ("round", "states", "crashed", "budget", "any_loss",
                 "moves", "N", "W", "caches")

    def __init__(self, round_, states, crashed, budget, any_loss, ctx):
        self.round = round_
        self.states = states
        self.crashed = crashed
        self.budget = budget
        self.any_loss = any_loss
        self.moves = enumerate_moves(ctx, round_, crashed, budget)
        m = len(self.moves)
        self.N = [0] * m
        self.W = [0.0] * m
        self.caches = [None] * m


class MoveCache:
    __slots__ = ("keys", "widths", "frozen", "proc_pos", "computing",
                 "crashers", "loss_flag", "chain_root")

    def __init__(self):
        self.chain_root = None


class ProtoNode:
    __slots__ = ("key_idx", "width", "frozen", "N", "W", "children")

    def __init__(self, key_idx, width, frozen):
        self.key_idx = key_idx
        self.width = width
        self.frozen = frozen
        self.N = [0] * width
        self.W = [0.0] * width
        self.children = [None] * width


def enumerate_moves(ctx, round_, crashed, budget):
    """Phase-legal round loss choices: crash sets over live processes with all
    delivery masks, in canonical (size, procs, mask) order."""
    if round_ < ctx.min_crash_round or budget <= 0:
        return [((), ())]
    live = [p for p in range(ctx.n) if not crashed[p]]
    moves = [((), ())]
    for size in range(1, budget + 1):
        if size > len(live):
            break
        for procs in combinations(live, size):
            mask_lists = []
            for p in procs:
                others = [q for q in range(ctx.n) if q != p]
                masks = []
                for sub in range(1 << (ctx.n - 1)):
                    mask = 0
                    for i in range(ctx.n - 1):
                        if sub >> i & 1:
                            mask |= 1 << others[i]
                    masks.append(mask)
                mask_lists.append(masks)
            idx = [0] * size
            while True:
                moves.append((procs, tuple(mask_lists[i][idx[i]] for i in range(size))))
                j = size - 1
                while j >= 0:
                    idx[j] += 1
                    if idx[j] < len(mask_lists[j]):
                        break
                    idx[j] = 0
                    j -= 1
                if j < 0:
                    break
    return moves


def build_move_cache(ctx, node, move):
    """Compute the distinct input keys (sorted) produced by applying `move`
    at this node, and which key each computing process looks up."""
    procs, masks = move
    cache = MoveCache()
    crashing = set(procs)
    t = node.round
    computing = [p for p in range(ctx.n) if not node.crashed[p] and p not in crashing]
    loss_flag = 0
    key_of_proc = {}
    for p in computing:
        vec = []
        for q in range(ctx.n):
            if q == p:
                continue
            if node.crashed[q]:
                s = ctx.lost
            elif q in crashing and not (masks[procs.index(q)] >> p & 1):
                s = ctx.lost
            else:
                s = node.states[q]
            if s == ctx.lost:
                loss_flag = 1
            vec.append(s)
        key_of_proc[p] = ctx.key_index(t, node.states[p], vec)
    keys = sorted(set(key_of_proc.values()))
    pos = {kk: i for i, kk in enumerate(keys)}
    cache.keys = keys
    cache.widths = [ctx.out_width(t)] * len(keys)
    cache.frozen = [ctx.frozen_choice[kk] for kk in keys]
    cache.proc_pos = [(p, pos[key_of_proc[p]]) for p in computing]
    cache.computing = computing
    cache.crashers = procs
    cache.loss_flag = loss_flag
    return cache


def evaluate_outcome(ctx, init, states, crashed, any_loss):
    decisions = [states[p] for p in range(ctx.n) if not crashed[p]]
    first = decisions[0]
    for dec in decisions:
        if dec != first:
            return -1
    if ctx.spec_kind == CONSENSUS:
        uniform = all(s == init[0] for s in init)
        if uniform and first != init[0] - ctx.first_init:
            return -1
    else:
        if any(s == ctx.first_init for s in init):
            if first != 0:
                return -1
        elif not any_loss and first != 1:
            return -1
    return 1


def make_successor(ctx, node, cache, assignment, init):
    t = node.round
    states = list(node.states)
    for p, pos in cache.proc_pos:
        states[p] = ctx.output_id(t, assignment[pos])
    crashed = list(node.crashed)
    for p in cache.crashers:
        crashed[p] = True
    any_loss = node.any_loss or cache.loss_flag
    if t == ctx.r:
        return ("T", evaluate_outcome(ctx, init, states, crashed, any_loss))
    return AdvNode(t + 1, states, crashed, node.budget - len(cache.crashers), any_loss, ctx)


def select_adv(node, ctx):
    m = len(node.moves)
    if m == 1:
        return 0
    n_sum = 0
    for v in node.N:
        n_sum += v
    explore = ctx.c_puct * (1.0 / m) * sqrt(n_sum)
    best = 0
    best_score = -1e300
    for i in range(m):
        n_i = node.N[i]
        q = node.W[i] / n_i if n_i > 0 else 0.0
        score = q + explore / (1.0 + n_i)
        if score > best_score:
            best_score = score
            best = i
    return best


def select_proto(pn, prior, ctx):
    if pn.frozen >= 0:
        return pn.frozen
    n_sum = 0
    for v in pn.N:
        n_sum += v
    explore = ctx.c_puct * sqrt(n_sum)
    best = 0
    best_score = -1e300
    for j in range(pn.width):
        n_j = pn.N[j]
        q = pn.W[j] / n_j if n_j > 0 else 0.0
        score = q + explore * prior[j] / (1.0 + n_j)
        if score > best_score:
            best_score = score
            best = j
    return best


def check_scenarios(ctx, trans, scenarios):
    """Bulk pass/fail evaluation of a total machine.

    `trans` maps key index -> output id; `scenarios` is a list of
    (init, crash_procs, crash_rounds, delivery_masks) tuples. Returns the
    indices of failing scenarios. Mirrors the trace simulator for machines
    with no missing transitions.
    """
    n = ctx.n
    r = ctx.r
    lost = ctx.lost
    bad = []
    for idx, (init, procs, rounds, masks) in enumerate(scenarios):
        cr = [0] * n  # crash round per process, 0 = never crashes
        cmask = [0] * n
        for i in range(len(procs)):
            cr[procs[i]] = rounds[i]
            cmask[procs[i]] = masks[i]
        states = list(init)
        any_loss = 0
        for t in range(1, r + 1):
            new_states = list(states)
            for p in range(n):
                if cr[p] and t >= cr[p]:
                    continue
                vec = []
                for q in range(n):
                    if q == p:
                        continue
                    cq = cr[q]
                    if cq and (t > cq or (t == cq and not (cmask[q] >> p & 1))):
                        vec.append(lost)
                        any_loss = 1
                    else:
                        vec.append(states[q])
                new_states[p] = trans[ctx.key_index(t, states[p], vec)]
            states = new_states
        crashed = [cr[p] != 0 for p in range(n)]
        if evaluate_outcome(ctx, list(init), states, crashed, any_loss) < 0:
            bad.append(idx)
    return bad


def simulate_counts(ctx, round_, states, crashed, budget, any_loss, init,
                    iterations, target_procs, target_masks):
    """Run `iterations` tree-search iterations and return per-key visit counts
    for the root round under the targeted loss edge, plus root edge stats."""
    root = AdvNode(round_, list(states), list(crashed), budget, any_loss, ctx)
    init = list(init)
    for _ in range(iterations):
        path_p = []
        path_a = []
        node = root
        while True:
            mi = select_adv(node, ctx)
            path_a.append((node, mi))
            cache = node.caches[mi]
            if cache is None:
                cache = build_move_cache(ctx, node, node.moves[mi])
                node.caches[mi] = cache
            if cache.chain_root is None:
                cache.chain_root = ProtoNode(cache.keys[0], cache.widths[0], cache.frozen[0])
            pn = cache.chain_root
            pos = 0
            assignment = []
            while True:
                j = select_proto(pn, ctx.priors[pn.key_idx], ctx)
                path_p.append((pn, j))
                assignment.append(j)
                succ = pn.children[j]
                if pos + 1 < len(cache.keys):
                    if succ is None:
                        succ = ProtoNode(cache.keys[pos + 1], cache.widths[pos + 1],
                                         cache.frozen[pos + 1])
                        pn.children[j] = succ
                    pn = succ
                    pos += 1
                else:
                    if succ is None:
                        succ = make_successor(ctx, node, cache, assignment, init)
                        pn.children[j] = succ
                    break
            if isinstance(succ, tuple):
                reward = succ[1]
                break
            node = succ
        for pn, j in path_p:
            pn.N[j] += 1
            pn.W[j] += reward
        for node, mi in path_a:
            node.N[mi] += 1
            node.W[mi] -= reward

    target = (tuple(target_procs), tuple(target_masks))
    mi = root.moves.index(target)
    cache = root.caches[mi]
    if cache is None:
        cache = build_move_cache(ctx, root, root.moves[mi])
        root.caches[mi] = cache
    counts = {kk: [0] * cache.widths[i] for i, kk in enumerate(cache.keys)}
    stack = [cache.chain_root]
    while stack:
        pn = stack.pop()
        if pn is None:
            continue
        acc = counts[pn.key_idx]
        for j in range(pn.width):
            acc[j] += pn.N[j]
        for child in pn.children:
            if isinstance(child, ProtoNode):
                stack.append(child)
    root_stats = (list(root.moves), list(root.N), list(root.W))
    return counts, cache.keys, root_stats
