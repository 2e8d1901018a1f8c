import math
import textwrap

import pytest
from hypothesis import given, settings, strategies as st

from darviz.traces import (
    DetectorConfig,
    EmptyTrace,
    EpochRecord,
    MalformedRow,
    MissingColumn,
    TrainingTrace,
    lint_trace,
    parse_trace,
)


def reference_findings(rows, factor=10.0, eps=1e-3, window=5):
    """Brute-force re-statement of the detector for cross-checking.

    No streak counters or running bests: each rule is decided by looking
    back over explicit slices, which makes the expected behavior easy to
    audit by hand.
    """

    def best_before(i):
        return min(r.loss for r in rows[:i])

    def stalled(j):
        if j == 0:
            return False
        b = best_before(j)
        threshold = eps * abs(b) if b != 0 else eps
        return b - rows[j].loss < threshold

    def widening(j):
        a, b = rows[j - 1], rows[j]
        return (
            a.val_loss is not None
            and b.val_loss is not None
            and math.isfinite(b.val_loss)
            and b.val_loss > a.val_loss
            and b.loss < a.loss
        )

    out = []
    r3_done = r4_done = False
    for i, row in enumerate(rows):
        if not math.isfinite(row.loss):
            out.append(("R1", row.epoch))
            break
        if i > 0 and row.loss > factor * best_before(i):
            out.append(("R2", row.epoch))
            break
        if not r3_done and i >= window:
            if all(stalled(j) for j in range(i - window + 1, i + 1)):
                out.append(("R3", row.epoch))
                r3_done = True
        if not r4_done and i >= window:
            if all(widening(j) for j in range(i - window + 1, i + 1)):
                out.append(("R4", row.epoch))
                r4_done = True
    return out


def trace_of(losses, vals=None):
    vals = vals or [None] * len(losses)
    rows = tuple(
        EpochRecord(epoch=i + 1, loss=l, val_loss=v)
        for i, (l, v) in enumerate(zip(losses, vals))
    )
    return TrainingTrace(rows)


def ids_and_epochs(findings):
    return [(f.rule_id, f.epoch) for f in findings]


class TestCsvParsing:
    def test_full_header(self):
        text = textwrap.dedent(
            """\
            epoch,loss,val_loss,accuracy
            1,1.0,1.1,0.5
            2,0.8,0.9,0.6
            """
        )
        trace = parse_trace(text)
        assert len(trace) == 2
        assert trace.rows[0] == EpochRecord(1, 1.0, 1.1, 0.5)

    def test_epoch_column_optional(self):
        trace = parse_trace("loss\n0.9\n0.8\n0.7\n")
        assert [r.epoch for r in trace.rows] == [1, 2, 3]

    def test_nan_and_inf_tokens(self):
        trace = parse_trace("loss\nnan\n")
        assert math.isnan(trace.rows[0].loss)
        trace = parse_trace("loss\ninf\n")
        assert math.isinf(trace.rows[0].loss)

    def test_unknown_column_rejected(self):
        with pytest.raises(MalformedRow) as exc:
            parse_trace("loss,lr\n0.5,0.1\n")
        assert exc.value.line == 1

    def test_loss_column_required(self):
        with pytest.raises(MissingColumn) as exc:
            parse_trace("epoch,val_loss\n1,0.5\n")
        assert exc.value.column == "loss"

    def test_bad_number_reports_line(self):
        text = "epoch,loss\n1,1.0\n2,0.9\n3,oops\n"
        with pytest.raises(MalformedRow) as exc:
            parse_trace(text)
        assert exc.value.line == 4

    def test_field_count_checked(self):
        with pytest.raises(MalformedRow) as exc:
            parse_trace("epoch,loss\n1,1.0,9\n")
        assert exc.value.line == 2

    def test_bad_epoch_value(self):
        with pytest.raises(MalformedRow):
            parse_trace("epoch,loss\nfirst,1.0\n")

    def test_accuracy_range_checked(self):
        with pytest.raises(MalformedRow) as exc:
            parse_trace("loss,accuracy\n0.5,1.5\n")
        assert exc.value.line == 2

    def test_epochs_must_increase(self):
        with pytest.raises(MalformedRow):
            parse_trace("epoch,loss\n2,1.0\n1,0.9\n")

    def test_empty_inputs(self):
        with pytest.raises(EmptyTrace):
            parse_trace("")
        with pytest.raises(EmptyTrace):
            parse_trace("epoch,loss\n")

    def test_blank_lines_skipped(self):
        assert len(parse_trace("loss\n0.5\n\n0.4\n")) == 2


class TestJsonlParsing:
    def test_happy_path(self):
        text = '{"epoch": 1, "loss": 1.0, "val_loss": 1.2}\n{"epoch": 2, "loss": 0.5}\n'
        trace = parse_trace(text, format="jsonlines")
        assert trace.rows[0].val_loss == 1.2
        assert trace.rows[1].val_loss is None

    def test_jsonl_alias(self):
        assert len(parse_trace('{"loss": 1.0}', format="jsonl")) == 1

    def test_implicit_epochs(self):
        trace = parse_trace('{"loss": 3.0}\n{"loss": 2.0}\n', format="jsonlines")
        assert [r.epoch for r in trace.rows] == [1, 2]

    def test_broken_json_reports_line(self):
        with pytest.raises(MalformedRow) as exc:
            parse_trace('{"loss": 1.0}\n{"loss": \n', format="jsonlines")
        assert exc.value.line == 2

    def test_non_object_line(self):
        with pytest.raises(MalformedRow):
            parse_trace("[1, 2]\n", format="jsonlines")

    def test_unknown_key_rejected(self):
        with pytest.raises(MalformedRow):
            parse_trace('{"loss": 1.0, "lr": 0.1}\n', format="jsonlines")

    def test_boolean_loss_rejected(self):
        with pytest.raises(MalformedRow):
            parse_trace('{"loss": true}\n', format="jsonlines")

    def test_missing_loss_key(self):
        with pytest.raises(MissingColumn):
            parse_trace('{"epoch": 1}\n', format="jsonlines")

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            parse_trace("loss\n1.0\n", format="tsv")


class TestTrainingTrace:
    def test_prefix(self):
        t = trace_of([1.0, 0.9, 0.8])
        assert len(t.prefix(2)) == 2
        with pytest.raises(EmptyTrace):
            t.prefix(0)

    def test_rows_required(self):
        with pytest.raises(EmptyTrace):
            TrainingTrace(())


class TestRuleFixtures:
    def test_non_finite_loss(self):
        t = trace_of([1.0, 0.8, float("nan"), 0.7, 0.6])
        findings = lint_trace(t)
        assert ids_and_epochs(findings) == [("R1", 3)]
        assert findings[0].severity == "fatal"

    def test_infinite_loss_is_fatal_too(self):
        t = trace_of([1.0, float("inf")])
        assert ids_and_epochs(lint_trace(t)) == [("R1", 2)]

    def test_divergence(self):
        t = trace_of([1.0, 0.9, 0.8, 0.7, 0.6, 7.0])
        findings = lint_trace(t)
        assert ids_and_epochs(findings) == [("R2", 6)]
        assert findings[0].severity == "fatal"

    def test_divergence_measured_against_best(self):
        # Best so far is 0.5 even though the last-seen loss was higher.
        t = trace_of([0.5, 2.0, 5.5])
        assert ids_and_epochs(lint_trace(t)) == [("R2", 3)]

    def test_just_under_divergence_factor(self):
        assert lint_trace(trace_of([1.0, 0.9, 9.0])) == []

    def test_plateau(self):
        t = trace_of([1.0] * 6)
        findings = lint_trace(t)
        assert ids_and_epochs(findings) == [("R3", 6)]
        assert findings[0].severity == "warning"

    def test_plateau_needs_full_window(self):
        assert lint_trace(trace_of([1.0] * 5)) == []

    def test_tiny_improvements_still_plateau(self):
        losses = [1.0 - 1e-5 * i for i in range(6)]
        assert ids_and_epochs(lint_trace(trace_of(losses))) == [("R3", 6)]

    def test_real_improvement_resets_plateau(self):
        t = trace_of([1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5])
        assert lint_trace(t) == []

    def test_widening_gap(self):
        losses = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5]
        vals = [1.0, 1.1, 1.2, 1.3, 1.4, 1.5]
        findings = lint_trace(trace_of(losses, vals))
        assert ("R4", 6) in ids_and_epochs(findings)
        assert all(f.severity == "warning" for f in findings)

    def test_gap_requires_both_trends(self):
        losses = [1.0, 0.9, 0.9, 0.7, 0.6, 0.5]
        vals = [1.0, 1.1, 1.2, 1.3, 1.4, 1.5]
        assert all(f.rule_id != "R4" for f in lint_trace(trace_of(losses, vals)))

    def test_missing_val_breaks_streak(self):
        losses = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5]
        vals = [1.0, 1.1, None, 1.3, 1.4, 1.5]
        assert all(f.rule_id != "R4" for f in lint_trace(trace_of(losses, vals)))

    def test_clean_decay_is_silent(self):
        losses = [1.0 * (0.8 ** k) for k in range(30)]
        vals = [l * 1.05 for l in losses]
        assert lint_trace(trace_of(losses, vals)) == []

    def test_fatal_stops_the_scan(self):
        # Constant losses would plateau at epoch 6, but the divergence at
        # epoch 6 is decided first and ends the scan.
        t = trace_of([1.0, 1.0, 1.0, 1.0, 1.0, 50.0])
        assert ids_and_epochs(lint_trace(t)) == [("R2", 6)]

    def test_rules_fire_once(self):
        t = trace_of([1.0] * 20)
        assert ids_and_epochs(lint_trace(t)) == [("R3", 6)]

    def test_findings_ordered_by_epoch(self):
        losses = [1.0 - 1e-6 * i for i in range(8)]
        vals = [1.0 + 0.1 * i for i in range(8)]
        findings = lint_trace(trace_of(losses, vals))
        assert ids_and_epochs(findings) == [("R3", 6), ("R4", 6)]

    def test_config_overrides(self):
        cfg = DetectorConfig(divergence_factor=2.0, window=3)
        t = trace_of([1.0, 2.5])
        assert ids_and_epochs(lint_trace(t, cfg)) == [("R2", 2)]
        assert ids_and_epochs(lint_trace(trace_of([1.0] * 4), cfg)) == [("R3", 4)]

    def test_to_dict(self):
        f = lint_trace(trace_of([1.0, float("nan")]))[0]
        assert f.to_dict() == {
            "rule_id": "R1",
            "epoch": 2,
            "severity": "fatal",
            "message": f.message,
        }


finite_losses = st.lists(
    st.floats(min_value=1e-3, max_value=100.0, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=40,
)


@st.composite
def arbitrary_traces(draw):
    losses = draw(finite_losses)
    n = len(losses)
    if draw(st.booleans()):
        losses[draw(st.integers(0, n - 1))] = draw(
            st.sampled_from([float("nan"), float("inf")])
        )
    vals = draw(
        st.lists(
            st.one_of(
                st.none(),
                st.floats(min_value=1e-3, max_value=100.0, allow_nan=False),
            ),
            min_size=n,
            max_size=n,
        )
    )
    return trace_of(losses, vals)


class TestDetectorProperties:
    @given(arbitrary_traces())
    @settings(max_examples=200, deadline=None)
    def test_engine_matches_reference(self, trace):
        got = ids_and_epochs(lint_trace(trace))
        assert got == reference_findings(trace.rows)

    @given(arbitrary_traces(), st.data())
    @settings(max_examples=150, deadline=None)
    def test_prefix_findings_are_a_prefix(self, trace, data):
        k = data.draw(st.integers(min_value=1, max_value=len(trace)))
        partial = lint_trace(trace.prefix(k))
        full = lint_trace(trace)
        assert full[: len(partial)] == partial

    @given(
        st.floats(min_value=0.5, max_value=0.99, allow_nan=False),
        st.integers(min_value=1, max_value=50),
    )
    @settings(max_examples=80, deadline=None)
    def test_steady_decay_never_flagged(self, factor, n):
        losses = [1.0 * (factor ** k) for k in range(n)]
        assert lint_trace(trace_of(losses)) == []

    @given(arbitrary_traces())
    @settings(max_examples=100, deadline=None)
    def test_at_most_one_fatal_and_it_is_last(self, trace):
        findings = lint_trace(trace)
        fatals = [f for f in findings if f.severity == "fatal"]
        assert len(fatals) <= 1
        if fatals:
            assert findings[-1] is fatals[0]
