#include "clrkit/image.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <stdexcept>

namespace F = torch::nn::functional;

namespace clrkit {

void validate_image(const ImageGrid& x) {
    TORCH_CHECK(x.dim() == 3 && x.size(0) == 3, "image must be {3,H,W}, got ", x.sizes());
    TORCH_CHECK(x.dtype() == torch::kFloat32, "image must be float32");
    const auto h = x.size(1), w = x.size(2);
    TORCH_CHECK(h >= 8 && w >= 8 && h % 2 == 0 && w % 2 == 0,
                "image H,W must be even and >= 8, got ", h, "x", w);
    TORCH_CHECK(torch::isfinite(x).all().item<bool>(), "image has non-finite values");
    TORCH_CHECK(x.min().item<float>() >= 0.0f && x.max().item<float>() <= 1.0f,
                "image values must lie in [0,1]");
}

bool RectMask::valid() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    return in01(x0) && in01(y0) && in01(x1) && in01(y1) && in01(confidence) && x0 < x1 && y0 < y1;
}

namespace {
std::int64_t round_coord(double v, std::int64_t n) {
    return static_cast<std::int64_t>(std::llround(v * static_cast<double>(n)));
}
}  // namespace

std::int64_t RectMask::col0(std::int64_t w) const { return round_coord(x0, w); }
std::int64_t RectMask::col1(std::int64_t w) const { return round_coord(x1, w); }
std::int64_t RectMask::row0(std::int64_t h) const { return round_coord(y0, h); }
std::int64_t RectMask::row1(std::int64_t h) const { return round_coord(y1, h); }

std::string RectMask::to_json() const {
    nlohmann::json j{{"x0", x0}, {"y0", y0}, {"x1", x1}, {"y1", y1}, {"confidence", confidence}};
    return j.dump();
}

RectMask RectMask::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    RectMask m;
    m.x0 = j.at("x0").get<double>();
    m.y0 = j.at("y0").get<double>();
    m.x1 = j.at("x1").get<double>();
    m.y1 = j.at("y1").get<double>();
    m.confidence = j.value("confidence", 1.0);
    if (!m.valid()) throw std::invalid_argument("invalid RectMask JSON: " + text);
    return m;
}

namespace {

ImageGrid mat_to_image(const cv::Mat& bgr) {
    cv::Mat rgb;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    cv::Mat f;
    const double scale = rgb.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
    rgb.convertTo(f, CV_32F, scale);
    auto t = torch::from_blob(f.data, {f.rows, f.cols, 3}, torch::kFloat32).clone();
    return t.permute({2, 0, 1}).contiguous();
}

cv::Mat image_to_mat8(const ImageGrid& img) {
    auto hwc = img.clamp(0, 1).permute({1, 2, 0}).contiguous();
    cv::Mat f(static_cast<int>(img.size(1)), static_cast<int>(img.size(2)), CV_32FC3,
              hwc.data_ptr<float>());
    cv::Mat u8, bgr;
    f.convertTo(u8, CV_8UC3, 255.0);
    cv::cvtColor(u8, bgr, cv::COLOR_RGB2BGR);
    return bgr;
}

}  // namespace

ImageGrid load_image(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw std::runtime_error("cannot decode image: " + path.string());
    if (m.channels() == 1) cv::cvtColor(m, m, cv::COLOR_GRAY2BGR);
    if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
    return mat_to_image(m);
}

void save_png16(const std::filesystem::path& path, const ImageGrid& img) {
    auto hwc = img.clamp(0, 1).permute({1, 2, 0}).contiguous();
    cv::Mat f(static_cast<int>(img.size(1)), static_cast<int>(img.size(2)), CV_32FC3,
              hwc.data_ptr<float>());
    cv::Mat u16, bgr;
    f.convertTo(u16, CV_16UC3, 65535.0);
    cv::cvtColor(u16, bgr, cv::COLOR_RGB2BGR);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), bgr)) throw std::runtime_error("cannot write: " + path.string());
}

void save_png8(const std::filesystem::path& path, const ImageGrid& img) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), image_to_mat8(img)))
        throw std::runtime_error("cannot write: " + path.string());
}

ImageGrid encode_decode_jpeg(const ImageGrid& img, int quality) {
    std::vector<uchar> buf;
    if (!cv::imencode(".jpg", image_to_mat8(img), buf, {cv::IMWRITE_JPEG_QUALITY, quality}))
        throw std::runtime_error("JPEG encode failed");
    cv::Mat dec = cv::imdecode(buf, cv::IMREAD_COLOR);
    if (dec.empty()) throw std::runtime_error("JPEG decode failed");
    return mat_to_image(dec);
}

ImageGrid encode_decode(const ImageGrid& img, const std::string& format, int jpeg_quality) {
    std::string ext;
    std::vector<int> params;
    if (format == "png") {
        ext = ".png";
    } else if (format == "bmp") {
        ext = ".bmp";
    } else if (format == "jpeg" || format == "jpg") {
        ext = ".jpg";
        params = {cv::IMWRITE_JPEG_QUALITY, jpeg_quality};
    } else {
        throw std::invalid_argument("unknown save format: " + format);
    }
    std::vector<uchar> buf;
    if (!cv::imencode(ext, image_to_mat8(img), buf, params))
        throw std::runtime_error("encode failed for " + format);
    cv::Mat dec = cv::imdecode(buf, cv::IMREAD_COLOR);
    if (dec.empty()) throw std::runtime_error("decode failed for " + format);
    return mat_to_image(dec);
}

bool jpeg_codec_available() {
    static const bool ok = [] {
        try {
            cv::Mat probe(8, 8, CV_8UC3, cv::Scalar(1, 2, 3));
            std::vector<uchar> buf;
            return cv::imencode(".jpg", probe, buf) && !cv::imdecode(buf, cv::IMREAD_COLOR).empty();
        } catch (...) {
            return false;
        }
    }();
    return ok;
}

torch::Tensor resize_bilinear(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
    const bool batched = x.dim() == 4;
    auto x4 = batched ? x : x.unsqueeze(0);
    if (x4.size(2) == h && x4.size(3) == w) return x;
    auto y = F::interpolate(x4, F::InterpolateFuncOptions()
                                    .size(std::vector<std::int64_t>{h, w})
                                    .mode(torch::kBilinear)
                                    .align_corners(false));
    return batched ? y : y.squeeze(0);
}

std::uint64_t image_hash(const ImageGrid& img) {
    auto u8 = (img.clamp(0, 1) * 255.0f).round().to(torch::kUInt8).contiguous();
    return fnv1a(u8.data_ptr(), static_cast<std::size_t>(u8.numel()));
}

}  // namespace clrkit
