#include "marginlab/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace marginlab {

std::string format_double(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

void atomic_write(const std::filesystem::path& path,
                  const std::string& content) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

// Header lines look like "# marginlab <what> key=<int> key=<int>".
std::vector<long long> header_values(const std::string& line,
                                     const std::string& what, int count) {
  std::istringstream ss(line);
  std::string hash, name, tag;
  ss >> hash >> name >> tag;
  if (hash != "#" || name != "marginlab") {
    throw IoError("bad header: " + line);
  }
  std::vector<long long> values;
  std::string field;
  while (ss >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw IoError("bad header field: " + field);
    values.push_back(std::stoll(field.substr(eq + 1)));
  }
  if (tag != what || static_cast<int>(values.size()) != count) {
    throw IoError("expected " + what + " header, got: " + line);
  }
  return values;
}

}  // namespace

void save_dataset(const NoisyDataset& data,
                  const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# marginlab dataset classes=" << data.num_classes
      << " dim=" << data.inputs.cols() << " count=" << data.size() << "\n";
  for (int i = 0; i < data.size(); ++i) {
    out << data.labels[i];
    for (Eigen::Index c = 0; c < data.inputs.cols(); ++c) {
      out << ' ' << format_double(data.inputs(i, c));
    }
    out << '\n';
  }
  atomic_write(path, out.str());
}

NoisyDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty dataset file");
  const auto header = header_values(line, "dataset", 3);

  NoisyDataset data;
  data.num_classes = static_cast<int>(header[0]);
  const int dim = static_cast<int>(header[1]);
  const int count = static_cast<int>(header[2]);
  data.inputs.resize(count, dim);
  data.labels.resize(count);
  for (int i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw IoError("truncated dataset file");
    std::istringstream ss(line);
    ss >> data.labels[i];
    for (int c = 0; c < dim; ++c) ss >> data.inputs(i, c);
    if (!ss) throw IoError("bad dataset row: " + line);
  }
  return data;
}

void save_matrix(const Eigen::MatrixXd& m, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# marginlab matrix rows=" << m.rows() << " cols=" << m.cols()
      << "\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
  atomic_write(path, out.str());
}

Eigen::MatrixXd load_matrix(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty matrix file");
  const auto header = header_values(line, "matrix", 2);
  Eigen::MatrixXd m(header[0], header[1]);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (!std::getline(in, line)) throw IoError("truncated matrix file");
    std::istringstream ss(line);
    for (Eigen::Index c = 0; c < m.cols(); ++c) ss >> m(r, c);
    if (!ss) throw IoError("bad matrix row: " + line);
  }
  return m;
}

void save_ledger(const NoiseLedger& ledger,
                 const std::filesystem::path& path) {
  std::ostringstream out;
  out << "# marginlab ledger entries=" << ledger.entries.size() << "\n";
  for (const NoiseEntry& e : ledger.entries) {
    out << e.index << ' '
        << (e.kind == NoiseKind::ClosedSet ? "closed" : "open") << ' '
        << e.original_label << ' ' << e.assigned_label << '\n';
  }
  atomic_write(path, out.str());
}

NoiseLedger load_ledger(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty ledger file");
  const auto header = header_values(line, "ledger", 1);

  NoiseLedger ledger;
  ledger.entries.resize(static_cast<std::size_t>(header[0]));
  for (NoiseEntry& e : ledger.entries) {
    std::string kind;
    if (!(in >> e.index >> kind >> e.original_label >> e.assigned_label)) {
      throw IoError("truncated ledger file");
    }
    if (kind == "closed") {
      e.kind = NoiseKind::ClosedSet;
    } else if (kind == "open") {
      e.kind = NoiseKind::OpenSet;
    } else {
      throw IoError("bad ledger kind: " + kind);
    }
  }
  return ledger;
}

namespace {

void write_tensor(std::ostringstream& out, const std::string& name,
                  const Eigen::MatrixXd& m) {
  out << "tensor " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ' ';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

Eigen::MatrixXd read_tensor(std::ifstream& in, const std::string& expected) {
  std::string tag, name;
  Eigen::Index rows = 0, cols = 0;
  if (!(in >> tag >> name >> rows >> cols) || tag != "tensor" ||
      name != expected) {
    throw IoError("expected tensor " + expected + " in checkpoint");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!(in >> m(r, c))) throw IoError("truncated tensor " + expected);
    }
  }
  return m;
}

}  // namespace

void save_checkpoint(const EmbeddingModel& model,
                     const std::filesystem::path& path) {
  std::ostringstream out;
  out << "marginlab checkpoint 1\n";
  write_tensor(out, "hidden_weight", model.hidden_weight);
  write_tensor(out, "hidden_bias", model.hidden_bias);
  write_tensor(out, "output_weight", model.output_weight);
  write_tensor(out, "output_bias", model.output_bias);
  write_tensor(out, "centers", model.centers);
  atomic_write(path, out.str());
}

EmbeddingModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::string word;
  int version = 0;
  in >> word;
  if (word != "marginlab") throw IoError("not a marginlab checkpoint");
  in >> word >> version;
  if (word != "checkpoint" || version != 1) {
    throw IoError("unsupported checkpoint version");
  }
  EmbeddingModel model;
  model.hidden_weight = read_tensor(in, "hidden_weight");
  model.hidden_bias = read_tensor(in, "hidden_bias");
  model.output_weight = read_tensor(in, "output_weight");
  model.output_bias = read_tensor(in, "output_bias");
  model.centers = read_tensor(in, "centers");
  return model;
}

void save_metrics_csv(const MetricsLog& log,
                      const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,iter,loss,lr,detected,correct_corrections,"
         "wrong_corrections,hard_count\n";
  for (const IterationRow& row : log.iterations) {
    out << row.epoch << ',' << row.iteration << ','
        << format_double(row.loss) << ',' << format_double(row.lr) << ','
        << row.detected << ',' << row.correct_corrections << ','
        << row.wrong_corrections << ',' << row.hard_count << '\n';
  }
  atomic_write(path, out.str());
}

MetricsLog load_metrics_csv(const std::filesystem::path& path,
                            bool ledger_attached) {
  std::ifstream in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty metrics file");

  MetricsLog log;
  log.ledger_attached = ledger_attached;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    IterationRow row;
    for (char& ch : line) {
      if (ch == ',') ch = ' ';
    }
    std::istringstream ss(line);
    if (!(ss >> row.epoch >> row.iteration >> row.loss >> row.lr >>
          row.detected >> row.correct_corrections >> row.wrong_corrections >>
          row.hard_count)) {
      throw IoError("bad metrics row: " + line);
    }
    log.iterations.push_back(row);
  }

  // Rebuild the per-epoch aggregates.
  for (const IterationRow& row : log.iterations) {
    if (log.epochs.empty() || log.epochs.back().epoch != row.epoch) {
      log.epochs.push_back({row.epoch, 0.0, 0, 0, 0, 0});
    }
    EpochRow& epoch = log.epochs.back();
    epoch.detected += row.detected;
    epoch.correct_corrections += row.correct_corrections;
    epoch.wrong_corrections += row.wrong_corrections;
    epoch.hard_count += row.hard_count;
  }
  for (EpochRow& epoch : log.epochs) {
    double sum = 0.0;
    int count = 0;
    for (const IterationRow& row : log.iterations) {
      if (row.epoch == epoch.epoch) {
        sum += row.loss;
        ++count;
      }
    }
    epoch.mean_loss = count ? sum / count : 0.0;
  }
  return log;
}

void save_detection_csv(const DetectionCurve& curve,
                        const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,detected,correct,wrong,precision,recall\n";
  for (const DetectionPoint& point : curve) {
    out << point.epoch << ',' << point.detected << ',' << point.correct << ','
        << point.wrong << ',' << format_double(point.precision) << ','
        << format_double(point.recall) << '\n';
  }
  atomic_write(path, out.str());
}

void save_comparison_csv(const std::vector<ComparisonRow>& rows,
                         const std::filesystem::path& path) {
  std::ostringstream out;
  out << "run,head,seed,accuracy,best_threshold\n";
  for (const ComparisonRow& row : rows) {
    out << row.run << ',' << row.head << ',' << row.seed << ','
        << format_double(row.accuracy) << ','
        << format_double(row.best_threshold) << '\n';
  }
  atomic_write(path, out.str());
}

void save_aggregate_csv(const std::vector<AggregateRow>& rows,
                        const std::filesystem::path& path) {
  std::ostringstream out;
  out << "head,runs,mean_accuracy,std_accuracy\n";
  for (const AggregateRow& row : rows) {
    out << row.head << ',' << row.runs << ','
        << format_double(row.mean_accuracy) << ','
        << format_double(row.std_accuracy) << '\n';
  }
  atomic_write(path, out.str());
}

}  // namespace marginlab
