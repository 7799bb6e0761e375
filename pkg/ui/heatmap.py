"""Heatmap widget for one attention matrix."""

import numpy as np
from PySide6.QtCore import QRectF, Qt, Signal
from PySide6.QtGui import QColor, QFont, QPainter
from PySide6.QtWidgets import QSizePolicy, QWidget

from .colormap import heat_color, matrix_range


class HeatmapWidget(QWidget):
    """Paints a matrix cell by cell; emits the hovered cell."""

    hovered = Signal(int, int, float)  # row, col, value

    MARGIN = 24

    def __init__(self, parent=None):
        super().__init__(parent)
        self.matrix = np.zeros((0, 0))
        self.title = ""
        self.vmin, self.vmax = 0.0, 1.0
        self.setMouseTracking(True)
        self.setMinimumSize(240, 240)
        self.setSizePolicy(QSizePolicy.Policy.Expanding, QSizePolicy.Policy.Expanding)

    def set_matrix(self, matrix, title: str = ""):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim == 1:
            m = m[None, :]
        self.matrix = m
        self.title = title
        self.vmin, self.vmax = matrix_range(m)
        self.update()

    def _cell_rect(self) -> QRectF:
        return QRectF(self.MARGIN, self.MARGIN, self.width() - 2 * self.MARGIN, self.height() - 2 * self.MARGIN)

    def cell_at(self, x: float, y: float) -> tuple[int, int] | None:
        rows, cols = self.matrix.shape
        area = self._cell_rect()
        if rows == 0 or cols == 0 or not area.contains(x, y):
            return None
        r = int((y - area.top()) / area.height() * rows)
        c = int((x - area.left()) / area.width() * cols)
        return min(r, rows - 1), min(c, cols - 1)

    def paintEvent(self, event):
        painter = QPainter(self)
        painter.fillRect(self.rect(), QColor("#0f1115"))
        rows, cols = self.matrix.shape
        painter.setPen(QColor("#e6e7ee"))
        painter.setFont(QFont("Arial", 9))
        painter.drawText(self.MARGIN, self.MARGIN - 8,
                         f"{self.title}  {rows}x{cols}  [{self.vmin:.3g}, {self.vmax:.3g}]")
        if rows and cols:
            area = self._cell_rect()
            w, h = area.width() / cols, area.height() / rows
            painter.setPen(Qt.PenStyle.NoPen)
            for r in range(rows):
                for c in range(cols):
                    painter.setBrush(QColor(*heat_color(self.matrix[r, c], self.vmin, self.vmax)))
                    painter.drawRect(QRectF(area.left() + c * w, area.top() + r * h, w, h))
        painter.end()

    def mouseMoveEvent(self, event):
        pos = event.position()
        cell = self.cell_at(pos.x(), pos.y())
        if cell is not None:
            r, c = cell
            self.hovered.emit(r, c, float(self.matrix[r, c]))
        super().mouseMoveEvent(event)
