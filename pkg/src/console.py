from pathlib import Path
from typing import Dict, List, Optional, Sequence

from rich.box import DOUBLE, HEAVY, ROUNDED
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from src.schema import Verdict


console = Console()

_VERDICT_STYLE = {Verdict.PASS.value: "bold green", Verdict.FAIL.value: "bold red"}


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


class BranchFlowVisualizer:
    """Terminal rendering of run headers, report tables and verdicts"""

    def show_header(self, command: str, family: str, config_hash: str, master_seed: Optional[int]):
        content = f"family: {family}\nconfig hash: {config_hash[:12]}\nmaster seed: {master_seed}"
        console.print(Panel(content, title=f"branchflow {command}", title_align="left", border_style="cyan", box=DOUBLE))

    def show_table(self, title: str, rows: Sequence[Dict], columns: Optional[List[str]] = None):
        """One row per record; a `verdict` / `pass` column is coloured."""
        rows = list(rows)
        if not rows:
            console.print(f"[dim]{title}: no rows[/dim]")
            return
        columns = columns or list(rows[0].keys())
        table = Table(title=title, box=ROUNDED, show_lines=False)
        for column in columns:
            table.add_column(column, justify="right" if column not in ("f_id", "verdict") else "left")
        for row in rows:
            cells = []
            for column in columns:
                value = row.get(column, "")
                if isinstance(value, bool):
                    value = Verdict.of(value).value
                text = _fmt(value)
                style = _VERDICT_STYLE.get(text)
                cells.append(f"[{style}]{text}[/{style}]" if style else text)
            table.add_row(*cells)
        console.print(table)

    def show_verdict(self, verdict: Verdict, written: Sequence[Path] = ()):
        style = "green" if verdict is Verdict.PASS else "red"
        content = f"overall verdict: {verdict.value}"
        if written:
            content += "\n" + "\n".join(f"  {path}" for path in written)
        console.print(Panel(content, title="result", title_align="left", border_style=style, box=ROUNDED))

    def show_error(self, error_msg: str, context: str = ""):
        content = f"error: {error_msg}"
        if context:
            content += f"\ncontext: {context}"
        console.print(Panel(content, title="failed", title_align="left", border_style="red", box=HEAVY, padding=(1, 2)))


visualizer = BranchFlowVisualizer()
