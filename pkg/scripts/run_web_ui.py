"""
启动 Web 可视化界面

用法: python scripts/run_web_ui.py runs/desk/final.npz
"""

import argparse

import gradio as gr

from mvdr_separation.web import create_gradio_app, make_enhance_callback
from mvdr_separation.utils.logger import setup_logging, get_logger


def main():
    parser = argparse.ArgumentParser(description="分离演示界面")
    parser.add_argument("checkpoint", help="训练得到的 .npz 检查点")
    parser.add_argument("--port", type=int, default=7860)
    args = parser.parse_args()

    setup_logging()
    logger = get_logger("web_ui")

    logger.info("加载检查点 %s ...", args.checkpoint)
    try:
        callback = make_enhance_callback(args.checkpoint)
    except Exception as e:
        logger.error(f"检查点加载失败: {e}")
        logger.info("请先运行 mvdr-sep train 生成检查点")
        return

    app, _ = create_gradio_app(callback)

    logger.info("启动 Web 界面...")
    logger.info("访问地址: http://127.0.0.1:%d", args.port)
    app.launch(server_name="127.0.0.1", server_port=args.port, share=False, theme=gr.themes.Soft())


if __name__ == "__main__":
    main()
