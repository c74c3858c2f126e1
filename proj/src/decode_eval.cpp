#include "hpe/decode_eval.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace hpe {

std::vector<double> default_thresholds_mm() {
    std::vector<double> t;
    for (double v = 0.0; v <= 80.0 + 1e-9; v += 2.0) {
        t.push_back(v);
    }
    return t;
}

EvalReport evaluate(const std::vector<Pose>& predictions, const std::vector<Pose>& ground_truth,
                    const std::vector<double>& thresholds_mm) {
    if (predictions.size() != ground_truth.size()) {
        throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions vs " +
                             std::to_string(ground_truth.size()) + " ground-truth frames");
    }
    if (predictions.empty()) {
        throw DimensionError("evaluate: no frames");
    }
    const std::size_t J = ground_truth[0].joints.size();
    for (std::size_t f = 0; f < predictions.size(); ++f) {
        if (predictions[f].joints.size() != J || ground_truth[f].joints.size() != J) {
            throw DimensionError("evaluate: joint count mismatch at frame " + std::to_string(f));
        }
    }

    EvalReport report;
    report.frames = static_cast<int>(predictions.size());
    report.per_joint_error_mm.assign(J, 0.0);
    std::vector<double> frame_max(predictions.size(), 0.0);
    double total = 0.0;
    for (std::size_t f = 0; f < predictions.size(); ++f) {
        double worst = 0.0;
        for (std::size_t j = 0; j < J; ++j) {
            const double e = distance(predictions[f].joints[j], ground_truth[f].joints[j]);
            report.per_joint_error_mm[j] += e;
            total += e;
            worst = std::max(worst, e);
        }
        frame_max[f] = worst;
    }
    for (double& e : report.per_joint_error_mm) {
        e /= static_cast<double>(predictions.size());
    }
    report.mean_error_mm = total / (static_cast<double>(predictions.size()) * static_cast<double>(J));

    for (double t : thresholds_mm) {
        int ok = 0;
        for (double m : frame_max) {
            ok += (m < t) ? 1 : 0;
        }
        report.success_curve.emplace_back(t, static_cast<double>(ok) / static_cast<double>(frame_max.size()));
    }
    return report;
}

void write_pose_dump(const std::filesystem::path& path, const std::vector<Pose>& poses,
                     const std::string& convention) {
    std::ofstream out(path);
    if (!out) {
        throw ParseError("cannot write pose dump: " + path.string());
    }
    out << "# " << convention << "\n";
    out << std::setprecision(17);
    for (std::size_t f = 0; f < poses.size(); ++f) {
        out << f;
        for (const Vec3& j : poses[f].joints) {
            out << " " << j.x << " " << j.y << " " << j.z;
        }
        out << "\n";
    }
}

std::vector<Pose> read_pose_dump(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open pose dump: " + path.string());
    }
    std::vector<Pose> poses;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') {
            continue;
        }
        std::istringstream ls(line);
        long frame_id = 0;
        if (!(ls >> frame_id)) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected frame id");
        }
        Pose pose;
        double x, y, z;
        while (ls >> x >> y >> z) {
            pose.joints.push_back({x, y, z});
        }
        if (pose.joints.empty()) {
            throw ParseError(path.string() + ":" + std::to_string(line_no) + ": no joints on line");
        }
        poses.push_back(std::move(pose));
    }
    return poses;
}

void write_eval_report(const std::filesystem::path& table_path, const std::filesystem::path& records_path,
                       const EvalReport& report, const std::vector<std::string>& joint_names) {
    {
        std::ofstream out(table_path);
        if (!out) {
            throw ParseError("cannot write report: " + table_path.string());
        }
        out << "frames:            " << report.frames << "\n";
        out << "mean error (mm):   " << std::fixed << std::setprecision(3) << report.mean_error_mm << "\n";
        out << "fallback joints:   " << report.fallback_joints << "\n\n";
        out << "per-joint mean error (mm)\n";
        for (std::size_t j = 0; j < report.per_joint_error_mm.size(); ++j) {
            const std::string name = j < joint_names.size() ? joint_names[j] : ("joint" + std::to_string(j));
            out << "  " << std::left << std::setw(12) << name << std::right << std::setw(8)
                << report.per_joint_error_mm[j] << "\n";
        }
        out << "\nsuccess-frame rate\n";
        for (const auto& [t, frac] : report.success_curve) {
            out << "  <" << std::setw(5) << t << " mm  " << std::setw(7) << frac << "\n";
        }
    }
    {
        std::ofstream out(records_path);
        if (!out) {
            throw ParseError("cannot write report records: " + records_path.string());
        }
        out << std::setprecision(17);
        out << "frames=" << report.frames << "\n";
        out << "mean_error_mm=" << report.mean_error_mm << "\n";
        out << "fallback_joints=" << report.fallback_joints << "\n";
        for (std::size_t j = 0; j < report.per_joint_error_mm.size(); ++j) {
            out << "per_joint_error_mm." << j << "=" << report.per_joint_error_mm[j] << "\n";
        }
        for (const auto& [t, frac] : report.success_curve) {
            out << "success " << t << " " << frac << "\n";
        }
    }
}

}  // namespace hpe
