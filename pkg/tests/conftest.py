import numpy as np
import pytest

from carenet import synth
from carenet.synth import AccessLogEvent, HcpProfile, NoteProfile
from carenet import taxonomy


def make_hcp(hcp_id, specialty="Medical Oncology", title="MD", hcp_type="Physician Faculty",
             is_resident=False):
    return HcpProfile(hcp_id=hcp_id, title=title, hcp_type=hcp_type,
                      specialty=specialty, is_resident=is_resident)


def make_note(note_id, intent="Orders", content="Note Signed", is_inpatient=False):
    return NoteProfile(note_id=note_id, intent=intent, content=content,
                       is_inpatient=is_inpatient)


def random_event_stream(rng, n_hcps=None, n_notes=None, patient_id="p0"):
    """Random but invariant-respecting event stream with profiles.

    Every note gets exactly one write; reads happen at or after the write.
    """
    n_hcps = n_hcps or int(rng.integers(1, 9))
    n_notes = n_notes or int(rng.integers(1, 13))
    hcps = [
        make_hcp(
            f"h{i}",
            specialty=taxonomy.SPECIALTIES[int(rng.integers(len(taxonomy.SPECIALTIES)))],
            title=taxonomy.TITLES[int(rng.integers(len(taxonomy.TITLES)))],
            hcp_type=taxonomy.HCP_TYPES[int(rng.integers(len(taxonomy.HCP_TYPES)))],
            is_resident=bool(rng.random() < 0.2),
        )
        for i in range(n_hcps)
    ]
    notes = [
        make_note(
            f"n{j}",
            intent=taxonomy.NOTE_INTENTS[int(rng.integers(len(taxonomy.NOTE_INTENTS)))],
            content=taxonomy.NOTE_CONTENTS[int(rng.integers(len(taxonomy.NOTE_CONTENTS)))],
            is_inpatient=bool(rng.random() < 0.3),
        )
        for j in range(n_notes)
    ]
    events = []
    for note in notes:
        t_w = float(rng.uniform(-90, 240))
        writer = hcps[int(rng.integers(n_hcps))]
        events.append(AccessLogEvent(patient_id, writer.hcp_id, note.note_id, "write", t_w))
        for _ in range(int(rng.integers(0, 5))):
            reader = hcps[int(rng.integers(n_hcps))]
            t_r = min(t_w + float(rng.exponential(20.0)), 365.0)
            events.append(AccessLogEvent(patient_id, reader.hcp_id, note.note_id, "read", t_r))
    perm = rng.permutation(len(events))
    return [events[i] for i in perm], hcps, notes


@pytest.fixture(scope="session")
def small_cohort():
    return synth.generate_cohort(synth.SynthConfig(seed=42, patients_per_cancer=30))


@pytest.fixture(scope="session")
def planted_cohort_and_graphs():
    """Default planted-signal cohort (200 patients per cancer type) with its
    observation-window graphs."""
    from carenet import graph

    cohort = synth.generate_cohort(synth.SynthConfig(seed=0))
    graphs = graph.build_patient_graphs(
        cohort.events, cohort.hcps, cohort.notes, graph.TimeWindows()
    )
    return cohort, graphs


def smoothness_margins(batch, params, n_layers=4):
    """(pool_margin, relu_margin) for a graph batch.

    The loss is differentiable only where the max-pool argmax is unique
    among unclamped rows and no pre-activation sits on the ReLU kink; a
    finite-difference step can cross either boundary, so gradient checks
    redraw instances whose margins are too small. Columns pooling to zero
    (all rows clamped) are locally constant and benign.
    """
    from carenet import nn as nnmod

    if isinstance(batch, tuple):  # combined model: (GraphBatch, vectors)
        batch = batch[0]
    if not hasattr(batch, "agg"):
        return np.inf, np.inf  # no pooling / message passing in the path
    H = batch.X
    outs = []
    relu_margin = np.inf
    for layer in range(n_layers):
        lp = nnmod.SageLayerParams(params[f"sage{layer}.W"], params[f"sage{layer}.b"])
        H, cache = nnmod.sage_forward(H, batch.agg, lp)
        Z = cache[2]
        if Z.size:
            relu_margin = min(relu_margin, float(np.abs(Z).min()))
        outs.append(H)
    Hcat = np.concatenate(outs, axis=1)
    pool_margin = np.inf
    offsets = batch.offsets
    for g in range(len(offsets) - 1):
        s, e = int(offsets[g]), int(offsets[g + 1])
        if e - s < 2:
            continue
        # rows identical in every column are the same function of the
        # parameters (structurally symmetric nodes); ties between them are
        # benign, so measure the gap among distinct rows only
        block = np.unique(Hcat[s:e], axis=0)
        if block.shape[0] < 2:
            continue
        block = np.sort(block, axis=0)
        top, second = block[-1], block[-2]
        positive = top > 0.0
        if positive.any():
            pool_margin = min(pool_margin, float((top[positive] - second[positive]).min()))
    return pool_margin, relu_margin


def randomized_params(model, rng):
    """Glorot weights with non-zero random biases; zero biases would park
    zero-feature nodes exactly on the ReLU kink."""
    params = model.init_params(int(rng.integers(2**32)))
    for name in params:
        if name.endswith(".b"):
            params[name] = rng.uniform(-0.3, 0.3, size=params[name].shape)
    return params


def smooth_instance_batch(model, kind, rng, params, draw_fn, max_nodes=10,
                          min_pool_margin=5e-4, min_relu_margin=1e-4, tries=500):
    """Single-instance batch on which the loss is locally smooth, so that
    central differences at step 1e-5 see no max-pool or ReLU boundary."""
    for _ in range(tries):
        instances = draw_fn(kind, rng, n=1, max_nodes=max_nodes)
        batch = model.batch(model.prepare(instances), [0])
        pool_m, relu_m = smoothness_margins(batch, params)
        if pool_m > min_pool_margin and relu_m > min_relu_margin:
            return batch
    raise AssertionError("could not draw a smooth instance batch")


def finite_difference_check(loss_fn, params, grads, rng, entries_per_tensor=4,
                            step=1e-5, rtol=1e-4, floor=1e-7):
    """Compare analytic grads against central differences on sampled entries
    of every parameter tensor; returns the worst relative error."""
    worst = 0.0
    for name, g in grads.items():
        flat = g.ravel()
        n_check = min(entries_per_tensor, flat.size)
        for k in rng.choice(flat.size, size=n_check, replace=False):
            perturbed = {n: a.copy() for n, a in params.items()}
            perturbed[name].ravel()[k] += step
            up = loss_fn(perturbed)
            perturbed[name].ravel()[k] -= 2 * step
            down = loss_fn(perturbed)
            fd = (up - down) / (2 * step)
            analytic = flat[k]
            rel = abs(fd - analytic) / max(abs(fd), abs(analytic), floor)
            worst = max(worst, rel)
            assert rel <= rtol, (
                f"gradient mismatch for {name}[{k}]: analytic={analytic:.3e} fd={fd:.3e} "
                f"rel={rel:.2e}"
            )
    return worst
