"""
Text summaries for suite reports.
"""

SUITE_HEADER_TEMPLATE = """Suite: {suite}{flags}
Model: {model_id}
Trials per n: {trials}   Censored (dropped): {censored}   Wall clock: {wall_clock:.1f}s
Result: {verdict}
"""

ORACLE_LINE_TEMPLATE = "  {name:<22} {value}"

ROW_LINE_TEMPLATE = "  " + "{cells}"


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def render_summary(report) -> str:
    """
    Human-readable block for a SuiteReport.

    Args:
        report: SuiteReport

    Returns:
        Multi-line text: header, oracle values used, one line per summary row
    """
    flags = []
    if report.incomplete:
        flags.append("INCOMPLETE")
    if report.experimental:
        flags.append("experimental")
    text = SUITE_HEADER_TEMPLATE.format(
        suite=report.suite,
        flags=f" [{', '.join(flags)}]" if flags else "",
        model_id=report.model_id[:12],
        trials=report.trials,
        censored=report.censored,
        wall_clock=report.wall_clock,
        verdict="PASS" if report.passed else "FAIL",
    )

    if report.oracle:
        text += "Oracle values:\n"
        for name, value in report.oracle.items():
            text += ORACLE_LINE_TEMPLATE.format(name=name, value=_format_value(value)) + "\n"

    if report.rows:
        columns = list(report.rows[0])
        text += ROW_LINE_TEMPLATE.format(cells="  ".join(columns)) + "\n"
        for row in report.rows:
            cells = "  ".join(_format_value(row.get(c)) for c in columns)
            text += ROW_LINE_TEMPLATE.format(cells=cells) + "\n"

    for note in report.notes:
        text += f"Note: {note}\n"
    return text
