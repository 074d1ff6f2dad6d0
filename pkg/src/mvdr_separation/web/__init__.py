"""Web 界面模块"""

from .gradio_app import GradioUI, create_gradio_app, enhance_upload, make_enhance_callback

__all__ = ["GradioUI", "create_gradio_app", "enhance_upload", "make_enhance_callback"]
