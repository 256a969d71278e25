"""Rendering of evaluation results and lifelong traces.

Every report is emitted three ways: an aligned plain-text table for humans,
machine-readable key-value lines, and a tab-delimited table.  Figures
(metric bars, knowledge growth) are rendered as PNG files next to them.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

METRIC_COLUMNS = ("P", "R", "F1", "TP", "pred", "gold")


def report_row(system, mode, report):
    return {
        "domain": report.domain,
        "system": system,
        "mode": mode,
        "P": report.precision,
        "R": report.recall,
        "F1": report.f1,
        "TP": report.true_positive,
        "pred": report.predicted_count,
        "gold": report.gold_count,
    }


def format_table(rows):
    """Aligned plain-text table of metric rows."""
    headers = ["domain", "system", "mode", *METRIC_COLUMNS]
    rendered = []
    for row in rows:
        rendered.append(
            [
                row["domain"],
                row["system"],
                row["mode"],
                f"{row['P']:.4f}",
                f"{row['R']:.4f}",
                f"{row['F1']:.4f}",
                str(row["TP"]),
                str(row["pred"]),
                str(row["gold"]),
            ]
        )
    widths = [
        max(len(h), *(len(r[i]) for r in rendered)) if rendered else len(h)
        for i, h in enumerate(headers)
    ]
    lines = [
        "  ".join(h.ljust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    for r in rendered:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    return "\n".join(lines) + "\n"


def format_key_value_lines(rows):
    """One machine-readable line per row: domain=.. P=.. R=.. F1=.. mode=.. system=.."""
    lines = []
    for row in rows:
        lines.append(
            f"domain={row['domain']} P={row['P']:.4f} R={row['R']:.4f} "
            f"F1={row['F1']:.4f} mode={row['mode']} system={row['system']}"
        )
    return "\n".join(lines) + "\n"


def format_tsv(rows):
    headers = ["domain", "system", "mode", *METRIC_COLUMNS]
    lines = ["\t".join(headers)]
    for row in rows:
        lines.append(
            "\t".join(
                [
                    row["domain"],
                    row["system"],
                    row["mode"],
                    f"{row['P']:.6f}",
                    f"{row['R']:.6f}",
                    f"{row['F1']:.6f}",
                    str(row["TP"]),
                    str(row["pred"]),
                    str(row["gold"]),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def render_metrics_figure(rows, path, mode):
    """Grouped bar chart of P/R/F1 per system for one scoring mode."""
    rows = [r for r in rows if r["mode"] == mode]
    if not rows:
        return False
    systems = sorted({r["system"] for r in rows})
    domains = sorted({r["domain"] for r in rows})
    fig, axes = plt.subplots(1, 3, figsize=(4 * 3, 3.2), sharey=True)
    width = 0.8 / max(len(systems), 1)
    for ax, metric in zip(axes, ("P", "R", "F1")):
        for si, system in enumerate(systems):
            values = []
            for domain in domains:
                match = [
                    r for r in rows if r["system"] == system and r["domain"] == domain
                ]
                values.append(match[0][metric] if match else 0.0)
            positions = [di + si * width for di in range(len(domains))]
            ax.bar(positions, values, width=width, label=system)
        ax.set_title(metric)
        ax.set_ylim(0.0, 1.05)
        ax.set_xticks([di + width * (len(systems) - 1) / 2 for di in range(len(domains))])
        ax.set_xticklabels(domains, rotation=30, ha="right", fontsize=8)
    axes[0].set_ylabel("score")
    axes[-1].legend(fontsize=8)
    fig.suptitle(f"aspect extraction ({mode} match)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def format_trace_lines(history, results):
    """Per-iteration trace lines for the lifelong loop."""
    lines = []
    by_domain = {r.domain_name: r for r in results}
    for domain, traces in history.items():
        for t in traces:
            lines.append(
                f"domain={domain} iteration={t.iteration} "
                f"K={t.knowledge_size} A={t.extracted_count}"
            )
        result = by_domain.get(domain)
        if result is not None:
            line = (
                f"domain={domain} converged={str(result.converged).lower()} "
                f"iterations={result.iterations_used}"
            )
            if result.first_mining_empty:
                line += " (first mining empty)"
            lines.append(line)
    return "\n".join(lines) + "\n" if lines else ""


def render_knowledge_growth_figure(history, path):
    """Reliable-set size per loop iteration, concatenated across domains."""
    if not history:
        return False
    fig, ax = plt.subplots(figsize=(6.4, 3.2))
    x = 0
    ticks, tick_labels = [], []
    xs, ys = [], []
    for domain, traces in history.items():
        start = x
        for t in traces:
            xs.append(x)
            ys.append(t.knowledge_size)
            x += 1
        ticks.append((start + x - 1) / 2)
        tick_labels.append(domain)
        ax.axvline(x - 0.5, color="0.85", linewidth=0.8)
    ax.plot(xs, ys, marker="o")
    ax.set_xticks(ticks)
    ax.set_xticklabels(tick_labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("|K| at featurization")
    ax.set_title("knowledge growth across domains")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True
