"""Writes office_like.tsv: 4874 users, 2406 items, 52957 interactions, 5-core.

Usage: python3 make_office_like.py > office_like.tsv
"""
import random

N_USERS, N_ITEMS, N_EDGES, CORE = 4874, 2406, 52957, 5

rng = random.Random(20240601)

# User degrees: CORE each plus a heavy-tailed remainder.
extra = N_EDGES - CORE * N_USERS
weights = [1.0 / (r + 1) ** 0.8 for r in range(N_USERS)]
total = sum(weights)
deg = [CORE + int(extra * w / total) for w in weights]
i = 0
while sum(deg) < N_EDGES:
    deg[i % N_USERS] += 1
    i += 1
rng.shuffle(deg)

# Every item appears at least CORE times; the rest follows popularity.
item_w = [1.0 / (r + 1) ** 0.9 for r in range(N_ITEMS)]
cover = [it for it in range(N_ITEMS) for _ in range(CORE)]
rng.shuffle(cover)

chosen = [set() for _ in range(N_USERS)]
order = sorted(range(N_USERS), key=lambda u: -deg[u])
pos = 0
while pos < len(cover):
    for u in order:
        if pos >= len(cover):
            break
        if len(chosen[u]) < deg[u] and cover[pos] not in chosen[u]:
            chosen[u].add(cover[pos])
            pos += 1
        elif len(chosen[u]) < deg[u]:
            cover.append(cover[pos])
            pos += 1
for u in range(N_USERS):
    while len(chosen[u]) < deg[u]:
        chosen[u].add(rng.choices(range(N_ITEMS), weights=item_w)[0])

lines = []
for u in range(N_USERS):
    for it in sorted(chosen[u]):
        rating = rng.randint(1, 5)
        ts = 1_100_000_000 + rng.randint(0, 300_000_000)
        lines.append(f"U{u:05d}\tI{it:05d}\t{rating}\t{ts}")
rng.shuffle(lines)
print("\n".join(lines))
