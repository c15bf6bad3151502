"""
Utility functions for result files and formatting
"""
import json
import logging
import os

logger = logging.getLogger(__name__)


def ensure_dir(path):
    """
    Create the output directory if needed
    """
    if not os.path.exists(path):
        os.makedirs(path)
    return path


def save_dataframe(frame, file_path, append=False, quiet=False):
    """
    Write a DataFrame as headered CSV; append=True adds rows without a header.
    Not-applicable values are written as empty cells.
    """
    ensure_dir(os.path.dirname(file_path) or ".")
    frame.to_csv(file_path, mode="a" if append else "w", header=not append, index=False, na_rep="")
    if not quiet:
        logger.info(f"Wrote {file_path} ({format_file_size(os.path.getsize(file_path))})")
    return file_path


def save_json(payload, file_path):
    """
    Write a JSON document with sorted keys so repeated runs are byte-identical
    """
    ensure_dir(os.path.dirname(file_path) or ".")
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote {file_path} ({format_file_size(os.path.getsize(file_path))})")
    return file_path


def format_file_size(size_bytes):
    """
    Format file size to human readable string
    """
    for unit in ['B', 'KB', 'MB', 'GB']:
        if size_bytes < 1024.0:
            return f"{size_bytes:.2f} {unit}"
        size_bytes /= 1024.0
    return f"{size_bytes:.2f} TB"
