// Copyright 2026 The Cloak Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cloak/distortion.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "cloak/errors.hpp"
#include "cloak/image_io.hpp"

namespace cloak {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

double parse_num(const std::string& s, const std::string& context) {
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (s.empty() || res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("distortion: bad number '" + s + "' in '" + context + "'");
  }
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

std::array<double, 3> parse_triple(const std::string& s, const std::string& context) {
  const auto parts = split(s, '/');
  if (parts.size() != 3) throw ConfigError("distortion: expected three values in '" + context + "'");
  return {parse_num(parts[0], context), parse_num(parts[1], context), parse_num(parts[2], context)};
}

int as_int(double v, const char* what) {
  if (v != std::floor(v)) throw ConfigError(std::string("distortion: ") + what + " must be an integer");
  return static_cast<int>(v);
}

}  // namespace

DistortionStage DistortionStage::pixelate(int block) {
  DistortionStage s;
  s.kind = DistortionKind::kPixelate;
  s.value = block;
  return s;
}

DistortionStage DistortionStage::jpeg(int quality) {
  DistortionStage s;
  s.kind = DistortionKind::kJpeg;
  s.value = quality;
  return s;
}

DistortionStage DistortionStage::blur(double sigma) {
  DistortionStage s;
  s.kind = DistortionKind::kGaussianBlur;
  s.value = sigma;
  return s;
}

DistortionStage DistortionStage::color(std::array<double, 3> gain, std::array<double, 3> offset) {
  DistortionStage s;
  s.kind = DistortionKind::kColorShift;
  s.gain = gain;
  s.offset = offset;
  return s;
}

DistortionStage DistortionStage::quantize() { return {}; }

DistortionSpec DistortionSpec::parse(const std::string& text) {
  DistortionSpec spec;
  const std::string t = trim(text);
  if (t.empty() || t == "identity") return spec;
  for (const std::string& raw : split(t, ',')) {
    const std::string item = trim(raw);
    const auto colon = item.find(':');
    const std::string name = item.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : item.substr(colon + 1);
    const bool has_arg = colon != std::string::npos;
    if (name == "quantize" && !has_arg) {
      spec.stages.push_back(DistortionStage::quantize());
    } else if (name == "pixelate" && has_arg) {
      spec.stages.push_back(DistortionStage::pixelate(as_int(parse_num(arg, item), "pixelate block")));
    } else if (name == "jpeg" && has_arg) {
      spec.stages.push_back(DistortionStage::jpeg(as_int(parse_num(arg, item), "jpeg quality")));
    } else if (name == "blur" && has_arg) {
      spec.stages.push_back(DistortionStage::blur(parse_num(arg, item)));
    } else if (name == "color" && has_arg) {
      const auto at = arg.find('@');
      const auto gain = parse_triple(arg.substr(0, at), item);
      const std::array<double, 3> offset =
          at == std::string::npos ? std::array<double, 3>{} : parse_triple(arg.substr(at + 1), item);
      spec.stages.push_back(DistortionStage::color(gain, offset));
    } else {
      throw ConfigError("distortion: unknown stage '" + item + "'");
    }
  }
  spec.validate();
  return spec;
}

std::string DistortionSpec::to_string() const {
  if (stages.empty()) return "identity";
  std::string out;
  for (const DistortionStage& s : stages) {
    if (!out.empty()) out += ',';
    switch (s.kind) {
      case DistortionKind::kPixelate: out += "pixelate:" + num(s.value); break;
      case DistortionKind::kJpeg: out += "jpeg:" + num(s.value); break;
      case DistortionKind::kGaussianBlur: out += "blur:" + num(s.value); break;
      case DistortionKind::kQuantize8: out += "quantize"; break;
      case DistortionKind::kColorShift:
        out += "color:" + num(s.gain[0]) + "/" + num(s.gain[1]) + "/" + num(s.gain[2]);
        if (s.offset != std::array<double, 3>{}) {
          out += "@" + num(s.offset[0]) + "/" + num(s.offset[1]) + "/" + num(s.offset[2]);
        }
        break;
    }
  }
  return out;
}

void DistortionSpec::validate() const {
  for (const DistortionStage& s : stages) {
    switch (s.kind) {
      case DistortionKind::kPixelate:
        if (s.value < 1 || s.value != std::floor(s.value)) {
          throw ConfigError("pixelate block must be a positive integer");
        }
        break;
      case DistortionKind::kJpeg:
        if (s.value < 1 || s.value > 100 || s.value != std::floor(s.value)) {
          throw ConfigError("jpeg quality must be an integer in [1,100]");
        }
        break;
      case DistortionKind::kGaussianBlur:
        if (!(s.value >= 0.0 && s.value <= 50.0)) throw ConfigError("blur sigma must be in [0,50]");
        break;
      case DistortionKind::kColorShift:
        for (int c = 0; c < 3; ++c) {
          if (!(s.gain[c] >= 0.0) || !std::isfinite(s.gain[c]) || !std::isfinite(s.offset[c])) {
            throw ConfigError("color gains must be non-negative and offsets finite");
          }
        }
        break;
      case DistortionKind::kQuantize8: break;
    }
  }
}

PixelGrid pixelate(const PixelGrid& grid, int block) {
  if (block < 1) throw ConfigError("pixelate block must be positive");
  if (block == 1) return grid;
  PixelGrid out(grid.height(), grid.width());
  for (int by = 0; by < grid.height(); by += block) {
    for (int bx = 0; bx < grid.width(); bx += block) {
      const int ey = std::min(grid.height(), by + block);
      const int ex = std::min(grid.width(), bx + block);
      const double inv = 1.0 / ((ey - by) * (ex - bx));
      for (int c = 0; c < 3; ++c) {
        double sum = 0.0;
        for (int y = by; y < ey; ++y) {
          for (int x = bx; x < ex; ++x) sum += grid.at(y, x, c);
        }
        for (int y = by; y < ey; ++y) {
          for (int x = bx; x < ex; ++x) out.at(y, x, c) = sum * inv;
        }
      }
    }
  }
  return out;
}

PixelGrid gaussian_blur(const PixelGrid& grid, double sigma) {
  if (!(sigma >= 0.0)) throw ConfigError("blur sigma must be non-negative");
  if (sigma == 0.0) return grid;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[i + radius];
  }
  for (double& k : kernel) k /= norm;
  const int h = grid.height();
  const int w = grid.width();
  PixelGrid tmp(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * grid.at(y, std::clamp(x + i, 0, w - 1), c);
        }
        tmp.at(y, x, c) = acc;
      }
    }
  }
  PixelGrid out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          acc += kernel[i + radius] * tmp.at(std::clamp(y + i, 0, h - 1), x, c);
        }
        out.at(y, x, c) = acc;
      }
    }
  }
  return out;
}

PixelGrid apply(const DistortionSpec& spec, const PixelGrid& grid) {
  spec.validate();
  PixelGrid out = grid;
  for (const DistortionStage& s : spec.stages) {
    switch (s.kind) {
      case DistortionKind::kPixelate: out = pixelate(out, static_cast<int>(s.value)); break;
      case DistortionKind::kJpeg: out = jpeg_roundtrip(out, static_cast<int>(s.value)); break;
      case DistortionKind::kGaussianBlur: out = gaussian_blur(out, s.value); break;
      case DistortionKind::kQuantize8: out = quantize_8bit(out); break;
      case DistortionKind::kColorShift: {
        auto v = out.values();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = s.gain[i % 3] * v[i] + s.offset[i % 3];
        break;
      }
    }
  }
  clamp_in_place(out);
  return out;
}

ImageBuffer apply(const DistortionSpec& spec, const ImageBuffer& image) {
  return {apply(spec, image.pixels), image.source_id};
}

std::vector<DistortionSpec> default_ladder() {
  std::vector<DistortionSpec> ladder{DistortionSpec{}};
  for (int b : {2, 4}) ladder.push_back({{DistortionStage::pixelate(b)}});
  for (int q : {90, 50, 20}) ladder.push_back({{DistortionStage::jpeg(q)}});
  for (double s : {1.0, 2.0}) ladder.push_back({{DistortionStage::blur(s)}});
  return ladder;
}

std::string DegradationReport::to_csv() const {
  std::ostringstream out;
  out << "distortion,ap,patched_ap,success_rate,partial_rate,failure_rate,persons\n";
  for (const DegradationRow& r : rows) {
    out << '"' << r.spec.to_string() << "\"," << num(r.ap) << ',' << num(r.patched_ap) << ','
        << num(r.outcomes.success_rate()) << ',' << num(r.outcomes.partial_rate()) << ','
        << num(r.outcomes.failure_rate()) << ',' << r.outcomes.total() << '\n';
  }
  return out.str();
}

DegradationReport degradation_report(const Patch& patch, const DetectorAdapter& adapter,
                                     const ImageSource& data,
                                     std::span<const DistortionSpec> ladder,
                                     const EvalOptions& base) {
  std::vector<DistortionSpec> rungs(ladder.begin(), ladder.end());
  for (const DistortionSpec& s : rungs) s.validate();
  if (std::none_of(rungs.begin(), rungs.end(), [](const DistortionSpec& s) { return s.is_identity(); })) {
    rungs.insert(rungs.begin(), DistortionSpec{});
  }
  DegradationReport report;
  for (const DistortionSpec& spec : rungs) {
    EvalOptions opt = base;
    opt.patch = patch;
    if (!spec.is_identity()) {
      opt.post_process = [spec](const ImageBuffer& image, std::size_t) { return apply(spec, image); };
    }
    const EvalResult r = evaluate(adapter, data, opt);
    report.rows.push_back({spec, r.ap, r.patched_ap, r.outcomes});
  }
  return report;
}

}  // namespace cloak
