"""掩蔽 MVDR 多说话人分离：时域 (CI-SDR) 损失端到端训练"""

__version__ = "0.1.0"
