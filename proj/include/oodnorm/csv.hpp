#pragma once

#include <string>
#include <utility>
#include <vector>

#include "oodnorm/metrics.hpp"
#include "oodnorm/stats.hpp"
#include "oodnorm/train.hpp"

namespace oodnorm {

/// Decimal encoding with enough digits to reproduce the double bit-exactly;
/// every CSV number in the project goes through this, so files are
/// byte-identical across reruns.
std::string fmt17(double v);

/// Matrix with header x0,x1,...  Readers reject ragged rows and non-numeric
/// cells with DataError.
void write_matrix_csv(const std::string& path, const Matrix& m);
Matrix read_matrix_csv(const std::string& path);

/// Columns: sample_id,statistic,score,label.
void write_scores_csv(const std::string& path, const std::vector<ScoredSample>& scored);
std::vector<ScoredSample> read_scores_csv(const std::string& path);

/// Columns: statistic,auc,ap,n_pos,n_neg.
void write_report_csv(const std::string& path, const std::vector<DetectionReport>& reports);

/// Columns: r,mean_bpd,stderr_bpd.
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);

/// Columns: step,train_loss,eval_bpd.
void write_train_log_csv(const std::string& path, const std::vector<TrainLogRow>& rows);

/// Two-column key,value file for small reports and run manifests.
void write_kv_csv(const std::string& path,
                  const std::vector<std::pair<std::string, std::string>>& rows);

} // namespace oodnorm
