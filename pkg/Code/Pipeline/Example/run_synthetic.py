from Code.DocumentCorpus.synthetic import write_synthetic_dataset
from Code.Pipeline.config import load_run_config
from Code.Pipeline.pipeline import run_pipeline

# Run from the repository root.
cfg = load_run_config("Code/Pipeline/Example/synthetic_config.json")
write_synthetic_dataset(cfg.dataset_path)
result = run_pipeline(cfg)
for summary in result.report.sizes:
    print(f"n={summary.size}: macro F1 {summary.mean_f1:.4f} "
          f"± {summary.variance:.6f}")
