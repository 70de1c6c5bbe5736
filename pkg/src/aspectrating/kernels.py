"""
Compiled Gibbs steps over plain arrays.

Argument groups, in the order the trainer packs them:

    doc    = (tokens, tables, table_topic, n_dt, sentiment, preference, word_rating)
    counts = (m_k, l_kw, l_k, l_kws, c_kxu)
    params = (alpha, gamma, beta, lambda, eta, mu, sigma2)

Every array is updated in place. Topic ids index the count arrays directly;
a topic is live while m_k > 0, and row `capacity` of the per-topic scratch
arrays stands for a brand-new topic. Callers guarantee a free topic id for
every draw and at least one table slot per word of the document.

Random draws consume pre-drawn uniforms in order; each step returns the
position of the next unused one.
"""

from __future__ import annotations
import math

import numpy as np
from numba import njit

from .errors import StateError
from .model import NEUTRAL, S, U

EXACT = 0
PRINTED = 1
LIKELIHOOD_MODES = {"exact": EXACT, "printed": PRINTED}

CELLS = U * S


# -----------------------
# Draws
# -----------------------

@njit(cache=True)
def log_sum(log_w, n):
    """log(sum(exp(log_w[:n]))), max-shifted."""
    top = -np.inf
    for j in range(n):
        if log_w[j] > top:
            top = log_w[j]
    if top == -np.inf:
        return top
    total = 0.0
    for j in range(n):
        total += math.exp(log_w[j] - top)
    return top + math.log(total)


@njit(cache=True)
def log_draw(log_w, n, uniform):
    """Index below n drawn with probability proportional to exp(log_w[:n])."""
    top = -np.inf
    for j in range(n):
        if log_w[j] > top:
            top = log_w[j]
    if not top > -np.inf or not top < np.inf:
        raise StateError("no candidate has finite positive weight")
    total = 0.0
    for j in range(n):
        total += math.exp(log_w[j] - top)
    target = uniform * total
    acc = 0.0
    last = 0
    for j in range(n):
        p = math.exp(log_w[j] - top)
        if p > 0.0:
            acc += p
            last = j
            if target < acc:
                return j
    return last


@njit(cache=True)
def lowest_free_topic(m_k):
    for k in range(m_k.size):
        if m_k[k] == 0:
            return k
    raise StateError("no free topic id")


@njit(cache=True)
def open_table(table_topic, n_dt, m_k, k):
    """Give the lowest free table slot topic k and return it."""
    for t in range(table_topic.size):
        if table_topic[t] < 0:
            table_topic[t] = k
            n_dt[t] = 0
            m_k[k] += 1
            return t
    raise StateError("no free table slot")


@njit(cache=True)
def tally_word(w, x, k, s, u, sign, counts):
    m_k, l_kw, l_k, l_kws, c_kxu = counts
    l_kw[k, w] += sign
    l_k[k] += sign
    l_kws[k, w, s] += sign
    c_kxu[k, x, u] += sign


# -----------------------
# Log weights
# -----------------------

@njit(cache=True)
def rating_cells(i, rating, sentiment, word_rating, ratings, mu, sigma2, out):
    """out[u * S + s]: log Gaussian factor of the review rating if word i took (u, s)."""
    total = 0.0
    count = 0
    for j in range(sentiment.size):
        if j != i and sentiment[j] != NEUTRAL:
            total += word_rating[j]
            count += 1
    neutral = total / count if count > 0 else mu
    for u in range(U):
        for s in range(S):
            mean = neutral if s == NEUTRAL else (total + ratings[u, s]) / (count + 1)
            out[u * S + s] = -((rating - mean) ** 2) / (2.0 * sigma2)


@njit(cache=True)
def word_cells(w, x, log_g, counts, beta, lam, eta, cells, log_f):
    """
    cells[k, u * S + s] = log phi_kw + log psi_kxu + log pi_kws + log_g[u * S + s]
    for every live topic k, and the uniform new-topic row at k = capacity.
    log_f[k] is the row's log-sum; -inf for dead topics.
    """
    m_k, l_kw, l_k, l_kws, c_kxu = counts
    cap = m_k.size
    V = l_kw.shape[1]
    for k in range(cap):
        if m_k[k] == 0:
            log_f[k] = -np.inf
            continue
        log_phi = math.log(l_kw[k, w] + beta) - math.log(l_k[k] + V * beta)
        polar = 0
        for s in range(S):
            polar += l_kws[k, w, s]
        pi_norm = math.log(polar + S * lam)
        psi_norm = math.log(c_kxu[k, x, 0] + c_kxu[k, x, 1] + U * eta)
        for u in range(U):
            log_psi = math.log(c_kxu[k, x, u] + eta) - psi_norm
            for s in range(S):
                cells[k, u * S + s] = log_phi + log_psi + math.log(l_kws[k, w, s] + lam) - pi_norm + log_g[u * S + s]
        log_f[k] = log_sum(cells[k], CELLS)
    uniform = -(math.log(V) + math.log(U) + math.log(S))
    for c in range(CELLS):
        cells[cap, c] = uniform + log_g[c]
    log_f[cap] = log_sum(cells[cap], CELLS)


@njit(cache=True)
def seating_weights(n_dt, table_topic, m_k, log_f, alpha, gamma, live, log_w, log_topic):
    """
    log_w over the occupied tables (their slots written to `live`) plus one new
    table last; log_topic over topic ids plus the new topic at `capacity`.
    Returns the number of occupied tables.
    """
    cap = m_k.size
    m_total = 0
    for k in range(cap):
        m_total += m_k[k]
        log_topic[k] = math.log(m_k[k]) + log_f[k] if m_k[k] > 0 else -np.inf
    log_topic[cap] = math.log(gamma) + log_f[cap]

    n_live = 0
    for t in range(n_dt.size):
        if n_dt[t] > 0:
            live[n_live] = t
            log_w[n_live] = math.log(n_dt[t]) + log_f[table_topic[t]]
            n_live += 1
    log_w[n_live] = math.log(alpha) + log_sum(log_topic, cap + 1) - math.log(m_total + gamma)
    return n_live


@njit(cache=True)
def _earlier_matches(words, sentiments, preferences):
    """For each member: earlier members with the same word, word and sentiment, preference."""
    n = words.size
    same_w = np.zeros(n, dtype=np.int64)
    same_ws = np.zeros(n, dtype=np.int64)
    same_u = np.zeros(n, dtype=np.int64)
    for j in range(n):
        for i in range(j):
            if words[i] == words[j]:
                same_w[j] += 1
                if sentiments[i] == sentiments[j]:
                    same_ws[j] += 1
            if preferences[i] == preferences[j]:
                same_u[j] += 1
    return same_w, same_ws, same_u


@njit(cache=True)
def block_log_likelihood(words, sentiments, preferences, x, counts, beta, lam, eta, mode, log_f):
    """
    Log likelihood of a detached table's words under every live topic and,
    at `capacity`, a new one. EXACT multiplies sequential predictives (words
    seen earlier at the table count); PRINTED multiplies per-word ratios
    against the fixed counts and scores a new topic 1/V^n * 1/U * 1/S^n.
    """
    m_k, l_kw, l_k, l_kws, c_kxu = counts
    cap = m_k.size
    V = l_kw.shape[1]
    n = words.size
    same_w, same_ws, same_u = _earlier_matches(words, sentiments, preferences)

    for k in range(cap + 1):
        new = k == cap
        if not new and m_k[k] == 0:
            log_f[k] = -np.inf
            continue
        if new and mode == PRINTED:
            log_f[k] = -(n * math.log(V) + math.log(U) + n * math.log(S))
            continue
        topic_words = 0 if new else l_k[k]
        author_words = 0 if new else c_kxu[k, x, 0] + c_kxu[k, x, 1]
        score = 0.0
        for j in range(n):
            w, s, u = words[j], sentiments[j], preferences[j]
            kw = 0 if new else l_kw[k, w]
            kws = 0 if new else l_kws[k, w, s]
            kxu = 0 if new else c_kxu[k, x, u]
            seen = j if mode == EXACT else 0
            if mode == EXACT:
                kw_prior = kw + same_w[j]
                kws += same_ws[j]
                kxu += same_u[j]
            else:
                kw_prior = kw
            score += (math.log(kw_prior + beta) - math.log(topic_words + seen + V * beta)
                      + math.log(kws + lam) - math.log(kw_prior + S * lam)
                      + math.log(kxu + eta) - math.log(author_words + seen + U * eta))
        log_f[k] = score


@njit(cache=True)
def rating_weights(i, doc, x, rating, counts, params, ratings, out):
    """out[u * S + s] for word i, whose sentiment and preference tallies are removed."""
    tokens, tables, table_topic, n_dt, sentiment, preference, word_rating = doc
    m_k, l_kw, l_k, l_kws, c_kxu = counts
    alpha, gamma, beta, lam, eta, mu, sigma2 = params
    k = table_topic[tables[i]]
    w = tokens[i]
    rating_cells(i, rating, sentiment, word_rating, ratings, mu, sigma2, out)
    polar = 0
    for s in range(S):
        polar += l_kws[k, w, s]
    pi_norm = math.log(polar + S * lam)
    psi_norm = math.log(c_kxu[k, x, 0] + c_kxu[k, x, 1] + U * eta)
    for u in range(U):
        for s in range(S):
            out[u * S + s] += (math.log(c_kxu[k, x, u] + eta) - psi_norm
                               + math.log(l_kws[k, w, s] + lam) - pi_norm)


# -----------------------
# Steps
# -----------------------

@njit(cache=True)
def resample_table(i, doc, x, rating, counts, params, ratings, uniforms, pos):
    """Detach word i, then draw its table, a new table's topic, and its (s, u) as one block."""
    tokens, tables, table_topic, n_dt, sentiment, preference, word_rating = doc
    m_k = counts[0]
    alpha, gamma, beta, lam, eta, mu, sigma2 = params
    w = tokens[i]

    t = tables[i]
    k = table_topic[t]
    tally_word(w, x, k, sentiment[i], preference[i], -1, counts)
    n_dt[t] -= 1
    tables[i] = -1
    if n_dt[t] == 0:
        table_topic[t] = -1
        m_k[k] -= 1

    cap = m_k.size
    log_g = np.empty(CELLS)
    rating_cells(i, rating, sentiment, word_rating, ratings, mu, sigma2, log_g)
    cells = np.empty((cap + 1, CELLS))
    log_f = np.empty(cap + 1)
    word_cells(w, x, log_g, counts, beta, lam, eta, cells, log_f)

    live = np.empty(n_dt.size, dtype=np.int64)
    log_w = np.empty(n_dt.size + 1)
    log_topic = np.empty(cap + 1)
    n_live = seating_weights(n_dt, table_topic, m_k, log_f, alpha, gamma, live, log_w, log_topic)

    j = log_draw(log_w, n_live + 1, uniforms[pos])
    pos += 1
    if j < n_live:
        t = live[j]
        k = table_topic[t]
        row = k
    else:
        row = log_draw(log_topic, cap + 1, uniforms[pos])
        pos += 1
        k = lowest_free_topic(m_k) if row == cap else row
        t = open_table(table_topic, n_dt, m_k, k)

    c = log_draw(cells[row], CELLS, uniforms[pos])
    pos += 1
    u, s = c // S, c % S
    sentiment[i] = s
    preference[i] = u
    word_rating[i] = ratings[u, s]
    tables[i] = t
    n_dt[t] += 1
    tally_word(w, x, k, s, u, 1, counts)
    return pos


@njit(cache=True)
def resample_table_topic(t, doc, x, counts, params, mode, uniforms, pos):
    """Detach table t from its topic and redraw the topic for all its words at once."""
    tokens, tables, table_topic, n_dt, sentiment, preference, word_rating = doc
    m_k = counts[0]
    gamma, beta, lam, eta = params[1], params[2], params[3], params[4]

    members = np.nonzero(tables == t)[0]
    k = table_topic[t]
    for j in members:
        tally_word(tokens[j], x, k, sentiment[j], preference[j], -1, counts)
    table_topic[t] = -1
    m_k[k] -= 1

    cap = m_k.size
    log_w = np.empty(cap + 1)
    block_log_likelihood(tokens[members], sentiment[members], preference[members], x, counts,
                         beta, lam, eta, mode, log_w)
    for k in range(cap):
        if m_k[k] > 0:
            log_w[k] += math.log(m_k[k])
    log_w[cap] += math.log(gamma)

    row = log_draw(log_w, cap + 1, uniforms[pos])
    pos += 1
    k = lowest_free_topic(m_k) if row == cap else row
    table_topic[t] = k
    m_k[k] += 1
    for j in members:
        tally_word(tokens[j], x, k, sentiment[j], preference[j], 1, counts)
    return pos


@njit(cache=True)
def resample_rating(i, doc, x, rating, counts, params, ratings, uniforms, pos):
    """Redraw word i's sentiment and preference, its table fixed."""
    tokens, tables, table_topic, n_dt, sentiment, preference, word_rating = doc
    m_k, l_kw, l_k, l_kws, c_kxu = counts
    k = table_topic[tables[i]]
    w = tokens[i]
    l_kws[k, w, sentiment[i]] -= 1
    c_kxu[k, x, preference[i]] -= 1

    log_w = np.empty(CELLS)
    rating_weights(i, doc, x, rating, counts, params, ratings, log_w)
    c = log_draw(log_w, CELLS, uniforms[pos])
    pos += 1
    u, s = c // S, c % S
    sentiment[i] = s
    preference[i] = u
    word_rating[i] = ratings[u, s]
    l_kws[k, w, s] += 1
    c_kxu[k, x, u] += 1
    return pos


# -----------------------
# Documents
# -----------------------

@njit(cache=True)
def seat_document(doc, x, counts, params, uniforms):
    """Initial CRF seating, word by word, of a document whose (s, u) are already drawn."""
    tokens, tables, table_topic, n_dt, sentiment, preference, word_rating = doc
    m_k = counts[0]
    alpha, gamma, beta, lam, eta = params[0], params[1], params[2], params[3], params[4]
    cap = m_k.size
    no_rating = np.zeros(CELLS)
    cells = np.empty((cap + 1, CELLS))
    log_f = np.empty(cap + 1)
    live = np.empty(n_dt.size, dtype=np.int64)
    log_w = np.empty(n_dt.size + 1)
    log_topic = np.empty(cap + 1)

    pos = 0
    for i in range(tokens.size):
        w, s, u = tokens[i], sentiment[i], preference[i]
        word_cells(w, x, no_rating, counts, beta, lam, eta, cells, log_f)
        c = u * S + s
        for k in range(cap + 1):
            if k == cap or m_k[k] > 0:
                log_f[k] = cells[k, c]
        n_live = seating_weights(n_dt, table_topic, m_k, log_f, alpha, gamma, live, log_w, log_topic)

        j = log_draw(log_w, n_live + 1, uniforms[pos])
        pos += 1
        if j < n_live:
            t = live[j]
        else:
            row = log_draw(log_topic, cap + 1, uniforms[pos])
            pos += 1
            k = lowest_free_topic(m_k) if row == cap else row
            t = open_table(table_topic, n_dt, m_k, k)
        tables[i] = t
        n_dt[t] += 1
        tally_word(w, x, table_topic[t], s, u, 1, counts)
    return pos


@njit(cache=True)
def sweep_document(doc, x, rating, counts, params, ratings, mode, uniforms):
    """Tables word by word, then every occupied table's topic, then every word's (s, u)."""
    tokens, tables, table_topic, n_dt, sentiment, preference, word_rating = doc
    n = tokens.size
    pos = 0
    for i in range(n):
        pos = resample_table(i, doc, x, rating, counts, params, ratings, uniforms, pos)
    for t in range(n_dt.size):
        if n_dt[t] > 0:
            pos = resample_table_topic(t, doc, x, counts, params, mode, uniforms, pos)
    for i in range(n):
        pos = resample_rating(i, doc, x, rating, counts, params, ratings, uniforms, pos)
    return pos
