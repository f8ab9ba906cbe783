import logging

from logging_config import configure_logger, redirect_logs


def test_logger_writes_to_its_own_file(tmp_path):
    logger = configure_logger("test_module", log_dir=str(tmp_path))
    logger.debug("This is a DEBUG log.")
    logger.error("This is an ERROR log.")
    for handler in logger.handlers:
        handler.flush()

    text = (tmp_path / "test_module.log").read_text(encoding="utf-8")
    assert "test_module - MainThread - DEBUG - This is a DEBUG log." in text
    assert "ERROR - This is an ERROR log." in text


def test_reconfiguring_does_not_duplicate_handlers(tmp_path):
    configure_logger("test_module", log_dir=str(tmp_path))
    logger = configure_logger("test_module", log_dir=str(tmp_path))
    assert len(logger.handlers) == 2
    assert logger.level == logging.DEBUG


def test_redirect_moves_file_output(tmp_path):
    logger = configure_logger("redirect_module", log_dir=str(tmp_path / "first"))
    redirect_logs(tmp_path / "run" / "logs")
    logger.info("after redirect")
    for handler in logger.handlers:
        handler.flush()

    assert "after redirect" in (tmp_path / "run" / "logs" / "redirect_module.log").read_text(encoding="utf-8")
    assert "after redirect" not in (tmp_path / "first" / "redirect_module.log").read_text(encoding="utf-8")
    assert len(logger.handlers) == 2
