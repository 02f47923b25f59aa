#pragma once

#include <iosfwd>

#include "endo/config.hpp"

namespace endo {

/// Pipeline stages behind the endoseg tool. Each writes into
/// config.paths.output and reports progress on log; failures throw Error.

/// <out>/manifest.json plus <out>/{train,validation,test}/img_NNN.tif.
void cmd_synth(const PipelineConfig& config, std::ostream& log);
/// Trains on the train split of paths.data. Writes weights.bin, run.json,
/// epochs.csv (per-epoch mean loss), steps.csv and checkpoints/epoch_NNN.bin.
void cmd_train(const PipelineConfig& config, std::ostream& log);
/// For each input (paths.inputs, or the test split of paths.data): <stem>.sdm
/// distance map and <stem>.labels.png + <stem>.labels.classes.json.
void cmd_infer(const PipelineConfig& config, std::ostream& log);
/// Morphometry of label maps (*.labels.png) or three-page masks listed in
/// paths.inputs, or of every *.labels.png in the output directory.
/// Writes <stem>.report.json per input and reports.csv.
void cmd_report(const PipelineConfig& config, std::ostream& log);
/// Compares each run in paths.runs (or the single paths.weights model) with
/// the test split: Bland-Altman CSV/SVG per parameter, pixel accuracy and GAR
/// strata in summary.json, MAE-per-checkpoint curves and their plots.
void cmd_eval(const PipelineConfig& config, std::ostream& log);
/// Blocks serving the annotation API until the process is stopped.
void cmd_serve(const PipelineConfig& config, std::ostream& log);

}  // namespace endo
