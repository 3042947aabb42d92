"""
CSV and workbook output for experiment results.

CSV files are the regression artifacts: fixed column order, a header row,
floats at 12 significant digits and no timestamps, so identical runs give
byte-identical files. Workbooks are an optional convenience view.
"""

import logging
from pathlib import Path
from typing import Iterable, List, Mapping, Optional, Sequence, Union

import pandas as pd

FLOAT_FORMAT = '%.12g'

MHR_COLUMNS = ['dist_id', 'n', 'bound_name', 'lhs', 'rhs', 'margin', 'pass']
CC_COLUMNS = ['benchmark', 'alpha', 'n', 'm', 'c_star', 'vcg_at_c', 'benchmark_value', 'dist_id', 'status']


def rows_to_frame(rows: Iterable[Mapping], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """
    Build a DataFrame from dict rows, keeping ``columns`` order when given.

    Raises:
        KeyError: If a row lacks one of ``columns``
    """
    rows = list(rows)
    frame = pd.DataFrame.from_records(rows)
    if columns is None:
        return frame
    if not rows:
        return pd.DataFrame(columns=list(columns))
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise KeyError(f"rows are missing columns {missing}")
    return frame[list(columns)]


def write_csv(
    data: Union[pd.DataFrame, Iterable[Mapping]],
    path: Union[str, Path],
    columns: Optional[Sequence[str]] = None,
    logger: Optional[logging.Logger] = None,
) -> Path:
    """
    Write rows as CSV with ``%.12g`` floats and Unix line endings.

    Example:
        >>> write_csv([{'a': 1.0 / 3.0}], 'out.csv')  # writes "a\\n0.333333333333\\n"
    """
    log = logger or logging.getLogger(__name__)
    frame = data if isinstance(data, pd.DataFrame) else rows_to_frame(data, columns)
    if columns is not None and isinstance(data, pd.DataFrame):
        frame = frame[list(columns)]
    output = Path(path)
    output.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(output, index=False, float_format=FLOAT_FORMAT, lineterminator='\n')
    log.info(f"💾 {len(frame):,} rows written to {output}")
    return output


class ExcelExporter:
    """
    Collect DataFrames as sheets and save them into one workbook.

    Example:
        >>> exporter = ExcelExporter(output_path='reports/reproduce.xlsx')
        >>> exporter.add_sheet(df, 'mhr', freeze_panes=(1, 0))
        >>> exporter.save()
    """

    MAX_SHEET_NAME = 31

    def __init__(self, output_path: Union[str, Path], logger: Optional[logging.Logger] = None):
        self.output_path = Path(output_path)
        self.logger = logger or logging.getLogger(__name__)
        self.sheets: List[dict] = []

    def add_sheet(self,
                  df: pd.DataFrame,
                  sheet_name: str,
                  freeze_panes: Optional[tuple] = (1, 0),
                  autofilter: bool = True) -> None:
        """
        Add a DataFrame as a new sheet.

        Args:
            df: DataFrame to export
            sheet_name: Sheet name (cut to Excel's 31 characters)
            freeze_panes: (row, col) of the first unfrozen cell, or None
            autofilter: Add a filter to the header row
        """
        self.sheets.append({
            'df': df,
            'name': sheet_name[:self.MAX_SHEET_NAME],
            'freeze_panes': freeze_panes,
            'autofilter': autofilter,
        })

    def save(self) -> str:
        """
        Write every sheet with openpyxl.

        Returns:
            Path to the saved workbook
        """
        if not self.sheets:
            self.logger.warning(f"⚠️ No sheets to export, {self.output_path} not written")
            return str(self.output_path)
        self.output_path.parent.mkdir(parents=True, exist_ok=True)
        with pd.ExcelWriter(self.output_path, engine='openpyxl') as writer:
            for sheet in self.sheets:
                df = sheet['df']
                df.to_excel(writer, sheet_name=sheet['name'], index=False)
                worksheet = writer.sheets[sheet['name']]
                if sheet['freeze_panes']:
                    row, col = sheet['freeze_panes']
                    worksheet.freeze_panes = worksheet.cell(row=row + 1, column=col + 1)
                if sheet['autofilter'] and len(df.columns):
                    worksheet.auto_filter.ref = worksheet.dimensions
        self.logger.info(f"✅ Exported {len(self.sheets)} sheets to {self.output_path}")
        return str(self.output_path)
