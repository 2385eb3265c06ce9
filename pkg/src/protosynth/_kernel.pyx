# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled tree-search kernel.

Mirrors _engine_py.py operation for operation; both must produce bit-identical
visit statistics. Keep any change here in lockstep with the pure twin.
"""

from itertools import combinations

from libc.math cimport sqrt

CONSENSUS = 0
ATOMIC_COMMIT = 1


cdef class EngineCtx:
    """Precomputed, immutable-per-call search context."""

    cdef public int n, r, d, k, x, lost, first_init, spec_kind, min_crash_round
    cdef public double c_puct
    cdef public list priors        # key index -> list of floats (legal-output order)
    cdef public list frozen_choice  # key index -> choice index or -1
    cdef public long round1_keys, keys_per_round

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
        self.priors = priors
        self.frozen_choice = frozen_choice
        self.round1_keys = x * (x + 1) ** (n - 1)
        self.keys_per_round = k * (k + 1) ** (n - 1)

    cpdef long key_index(self, int round_, int own, others):
        cdef long idx
        cdef int base, s
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

    cpdef int out_width(self, int round_):
        return self.d if round_ == self.r else self.k

    cpdef int output_id(self, int round_, int choice):
        return choice if round_ == self.r else self.d + choice


cdef class AdvNode:
    cdef public int round
    cdef public list states, crashed, moves, N, W, caches
    cdef public int budget, any_loss

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


cdef class MoveCache:
    cdef public list keys, widths, frozen, proc_pos, computing
    cdef public tuple crashers
    cdef public int loss_flag
    cdef public object chain_root

    def __init__(self):
        self.chain_root = None


cdef class ProtoNode:
    cdef public long key_idx
    cdef public int width, frozen
    cdef public list N, W, children

    def __init__(self, key_idx, width, frozen):
        self.key_idx = key_idx
        self.width = width
        self.frozen = frozen
        self.N = [0] * width
        self.W = [0.0] * width
        self.children = [None] * width


def enumerate_moves(EngineCtx ctx, int round_, crashed, int budget):
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


cdef MoveCache build_move_cache(EngineCtx ctx, AdvNode node, move):
    """Compute the distinct input keys (sorted) produced by applying `move`
    at this node, and which key each computing process looks up."""
    procs, masks = move
    cdef MoveCache cache = MoveCache()
    crashing = set(procs)
    t = node.round
    computing = [p for p in range(ctx.n) if not node.crashed[p] and p not in crashing]
    cdef int loss_flag = 0
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


def evaluate_outcome(EngineCtx ctx, init, states, crashed, any_loss):
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


cdef object make_successor(EngineCtx ctx, AdvNode node, MoveCache cache, list assignment, list init):
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


cdef int select_adv(AdvNode node, EngineCtx ctx):
    cdef int m = len(node.moves)
    if m == 1:
        return 0
    cdef long n_sum = 0
    cdef int i, n_i, best
    cdef double q, score, best_score, explore
    for i in range(m):
        n_sum += <long> node.N[i]
    explore = ctx.c_puct * (1.0 / m) * sqrt(n_sum)
    best = 0
    best_score = -1e300
    for i in range(m):
        n_i = node.N[i]
        q = (<double> node.W[i]) / n_i if n_i > 0 else 0.0
        score = q + explore / (1.0 + n_i)
        if score > best_score:
            best_score = score
            best = i
    return best


cdef int select_proto(ProtoNode pn, list prior, EngineCtx ctx):
    if pn.frozen >= 0:
        return pn.frozen
    cdef long n_sum = 0
    cdef int j, n_j, best
    cdef double q, score, best_score, explore
    for j in range(pn.width):
        n_sum += <long> pn.N[j]
    explore = ctx.c_puct * sqrt(n_sum)
    best = 0
    best_score = -1e300
    for j in range(pn.width):
        n_j = pn.N[j]
        q = (<double> pn.W[j]) / n_j if n_j > 0 else 0.0
        score = q + explore * (<double> prior[j]) / (1.0 + n_j)
        if score > best_score:
            best_score = score
            best = j
    return best


def check_scenarios(EngineCtx ctx, trans, scenarios):
    """Bulk pass/fail evaluation of a total machine.

    `trans` maps key index -> output id; `scenarios` is a list of
    (init, crash_procs, crash_rounds, delivery_masks) tuples. Returns the
    indices of failing scenarios. Mirrors the trace simulator for machines
    with no missing transitions.
    """
    cdef int n = ctx.n
    cdef int r = ctx.r
    cdef int lost = ctx.lost
    cdef int first_init = ctx.first_init
    cdef int d = ctx.d
    cdef int k = ctx.k
    cdef int x = ctx.x
    cdef int spec_kind = ctx.spec_kind
    cdef long round1_keys = ctx.round1_keys
    cdef long keys_per_round = ctx.keys_per_round
    cdef int base1 = x + 1
    cdef int basek = k + 1
    cdef int cr[16]
    cdef int cmask[16]
    cdef int st[16]
    cdef int new_st[16]
    cdef int init_arr[16]
    cdef int p, q, t, i, s, cq, any_loss, first, ok, flag
    cdef long idx, sidx
    if n > 16:
        raise ValueError("check_scenarios supports n <= 16")
    cdef list trans_list = list(trans)
    bad = []
    sidx = 0
    for init, procs, rounds, masks in scenarios:
        for p in range(n):
            cr[p] = 0
            cmask[p] = 0
            init_arr[p] = init[p]
            st[p] = init[p]
        for i in range(len(procs)):
            cr[procs[i]] = rounds[i]
            cmask[procs[i]] = masks[i]
        any_loss = 0
        for t in range(1, r + 1):
            for p in range(n):
                new_st[p] = st[p]
            for p in range(n):
                if cr[p] and t >= cr[p]:
                    continue
                idx = st[p] - first_init if t == 1 else st[p] - d
                for q in range(n):
                    if q == p:
                        continue
                    cq = cr[q]
                    if cq and (t > cq or (t == cq and not (cmask[q] >> p & 1))):
                        s = lost
                        any_loss = 1
                    else:
                        s = st[q]
                    if t == 1:
                        idx = idx * base1 + (x if s == lost else s - first_init)
                    else:
                        idx = idx * basek + (k if s == lost else s - d)
                if t > 1:
                    idx = round1_keys + (t - 2) * keys_per_round + idx
                new_st[p] = trans_list[idx]
            for p in range(n):
                st[p] = new_st[p]
        first = -1
        ok = 1
        for p in range(n):
            if cr[p] == 0:
                if first < 0:
                    first = st[p]
                elif st[p] != first:
                    ok = 0
        if ok:
            if spec_kind == CONSENSUS:
                flag = 1
                for p in range(n):
                    if init_arr[p] != init_arr[0]:
                        flag = 0
                if flag and first != init_arr[0] - first_init:
                    ok = 0
            else:
                flag = 0
                for p in range(n):
                    if init_arr[p] == first_init:
                        flag = 1
                if flag:
                    if first != 0:
                        ok = 0
                elif not any_loss and first != 1:
                    ok = 0
        if not ok:
            bad.append(sidx)
        sidx += 1
    return bad


def simulate_counts(EngineCtx ctx, round_, states, crashed, budget, any_loss, init,
                    iterations, target_procs, target_masks):
    """Run `iterations` tree-search iterations and return per-key visit counts
    for the root round under the targeted loss edge, plus root edge stats."""
    cdef AdvNode root = AdvNode(round_, list(states), list(crashed), budget, any_loss, ctx)
    cdef AdvNode node
    cdef MoveCache cache
    cdef ProtoNode pn
    cdef int mi, j, pos, reward, it
    init = list(init)
    for it in range(iterations):
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
        for pn_j in path_p:
            pn = pn_j[0]
            j = pn_j[1]
            pn.N[j] = pn.N[j] + 1
            pn.W[j] = pn.W[j] + reward
        for node_mi in path_a:
            node = node_mi[0]
            mi = node_mi[1]
            node.N[mi] = node.N[mi] + 1
            node.W[mi] = node.W[mi] - reward

    target = (tuple(target_procs), tuple(target_masks))
    mi = root.moves.index(target)
    cache = root.caches[mi]
    if cache is None:
        cache = build_move_cache(ctx, root, root.moves[mi])
        root.caches[mi] = cache
    counts = {kk: [0] * cache.widths[i] for i, kk in enumerate(cache.keys)}
    stack = [cache.chain_root]
    while stack:
        top = stack.pop()
        if top is None:
            continue
        pn = top
        acc = counts[pn.key_idx]
        for j in range(pn.width):
            acc[j] += pn.N[j]
        for child in pn.children:
            if isinstance(child, ProtoNode):
                stack.append(child)
    root_stats = (list(root.moves), list(root.N), list(root.W))
    return counts, cache.keys, root_stats
