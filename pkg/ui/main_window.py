"""Attention viewer main window."""

from pathlib import Path

from PySide6.QtCore import Qt
from PySide6.QtGui import QAction, QKeySequence
from PySide6.QtWidgets import (
    QMainWindow, QWidget, QVBoxLayout, QHBoxLayout,
    QLabel, QComboBox, QPushButton, QSplitter,
    QStatusBar, QMessageBox, QFileDialog, QListWidget,
)

from config import load_viewer_settings, save_viewer_settings, push_recent_dump
from errors import HusformerError

from .entries import describe, load_dump, matrix_entries
from .heatmap import HeatmapWidget

STYLE = """
    QMainWindow, QWidget {
        background-color: #0f1115;
        color: #e6e7ee;
    }
    QLabel {
        background-color: transparent;
    }
    QPushButton {
        background-color: #1a1f2e;
        border: 1px solid #404757;
        border-radius: 4px;
        padding: 8px 12px;
        font-size: 11px;
    }
    QPushButton:hover {
        background-color: #20273a;
    }
    QComboBox, QListWidget {
        background-color: #151823;
        border: 1px solid #404757;
        border-radius: 4px;
        padding: 4px;
        font-size: 11px;
    }
    QListWidget::item:selected {
        background-color: #26304a;
    }
"""


class AttentionViewer(QMainWindow):
    """Sidebar of matrices from one dump, heatmap of the selected one."""

    def __init__(self, dump_path: Path | None = None, settings: dict | None = None):
        super().__init__()
        self.setWindowTitle("Attention Viewer")
        self.resize(1000, 640)
        self.setMinimumSize(720, 480)

        self.settings = settings if settings is not None else load_viewer_settings()
        self.entries = []
        self.dump_path: Path | None = None

        self._setup_ui()
        self.setStyleSheet(STYLE)
        self._setup_menus()
        self._restore_settings()

        if dump_path is not None:
            self.open_dump(Path(dump_path))
        elif self.settings.get("last_dump") and Path(self.settings["last_dump"]).exists():
            self.open_dump(Path(self.settings["last_dump"]))

    def _setup_ui(self):
        central_widget = QWidget()
        self.setCentralWidget(central_widget)

        main_layout = QVBoxLayout(central_widget)
        main_layout.setContentsMargins(12, 12, 12, 12)
        main_layout.setSpacing(6)

        # Top bar
        top_layout = QHBoxLayout()
        top_layout.addWidget(QLabel("Dump:"))

        self.dump_combo = QComboBox()
        self.dump_combo.setEditable(True)
        self.dump_combo.setMinimumWidth(400)
        self.dump_combo.addItems(self.settings.get("recent_dumps", []))
        top_layout.addWidget(self.dump_combo, 1)

        pick_btn = QPushButton("Pick…")
        pick_btn.clicked.connect(self.choose_dump)
        top_layout.addWidget(pick_btn)

        open_btn = QPushButton("Open")
        open_btn.clicked.connect(lambda: self.open_dump(Path(self.dump_combo.currentText())))
        top_layout.addWidget(open_btn)
        main_layout.addLayout(top_layout)

        self.summary_label = QLabel("")
        self.summary_label.setStyleSheet("color: #9aa1b2;")
        main_layout.addWidget(self.summary_label)

        splitter = QSplitter(Qt.Orientation.Horizontal)
        self.sidebar = QListWidget()
        self.sidebar.currentRowChanged.connect(self._on_entry_selected)
        splitter.addWidget(self.sidebar)

        self.heatmap = HeatmapWidget()
        self.heatmap.hovered.connect(self._on_hover)
        splitter.addWidget(self.heatmap)
        splitter.setSizes([260, 740])
        main_layout.addWidget(splitter, 1)

        self.status_bar = QStatusBar()
        self.setStatusBar(self.status_bar)
        self.status_label = QLabel("Ready")
        self.status_label.setStyleSheet("color: #9aa1b2; padding: 6px 12px;")
        self.status_bar.addWidget(self.status_label)

    def _setup_menus(self):
        file_menu = self.menuBar().addMenu("File")

        open_action = QAction("Open dump…", self)
        open_action.setShortcut(QKeySequence("Ctrl+O"))
        open_action.triggered.connect(self.choose_dump)
        file_menu.addAction(open_action)

        file_menu.addSeparator()
        exit_action = QAction("Exit", self)
        exit_action.triggered.connect(self.close)
        file_menu.addAction(exit_action)

    def _restore_settings(self):
        geom = self.settings.get("window_geometry")
        if geom and "x" in geom and "+" in geom:
            try:
                size_part, pos_part = geom.split("+", 1)
                width, height = map(int, size_part.split("x"))
                x, y = map(int, pos_part.split("+"))
                self.resize(width, height)
                self.move(x, y)
            except ValueError:
                pass

    def choose_dump(self):
        path, _ = QFileDialog.getOpenFileName(self, "Open attention dump", "", "JSON (*.json)")
        if path:
            self.open_dump(Path(path))

    def open_dump(self, path: Path):
        try:
            doc = load_dump(path)
            entries = matrix_entries(doc)
        except (OSError, HusformerError) as e:
            QMessageBox.warning(self, "Open dump", str(e))
            return
        self.dump_path = path
        self.entries = entries
        self.sidebar.clear()
        self.sidebar.addItems([label for label, _ in entries])
        self.summary_label.setText(describe(doc))
        push_recent_dump(self.settings, path)
        self.dump_combo.blockSignals(True)
        self.dump_combo.clear()
        self.dump_combo.addItems(self.settings["recent_dumps"])
        self.dump_combo.blockSignals(False)
        if entries:
            self.sidebar.setCurrentRow(0)
        self._set_status(f"{path.name}: {len(entries)} matrices")

    def _on_entry_selected(self, row: int):
        if 0 <= row < len(self.entries):
            label, matrix = self.entries[row]
            self.heatmap.set_matrix(matrix, label)

    def _on_hover(self, row: int, col: int, value: float):
        self._set_status(f"row {row}, col {col}: {value:.6g}")

    def _set_status(self, text: str):
        self.status_label.setText(text)

    def closeEvent(self, event):
        try:
            geometry = self.geometry()
            self.settings["window_geometry"] = f"{geometry.width()}x{geometry.height()}+{geometry.x()}+{geometry.y()}"
            save_viewer_settings(self.settings)
        except OSError:
            pass
        event.accept()
