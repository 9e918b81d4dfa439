import datetime
import math
from pathlib import Path

import xlsxwriter

# fixed document timestamp so repeated runs write the same workbook
_CREATED = datetime.datetime(2000, 1, 1)


def _check_output_path(output_path, file_ext):
    """
    Creates the output path's parent directory if it doesnt exist.

    :type output_path: Path | str
    :param output_path: the output path to create

    :type file_ext: str
    :param file_ext: file extension of the output path

    :rtype: Path
    :return: the output path with the file extension
    """
    output_path = Path(output_path)
    if not output_path.parent.exists():
        output_path.parent.mkdir(parents=True)

    if output_path.suffix != file_ext:
        return output_path.with_suffix(file_ext)
    else:
        return output_path


def create_report_xlsx_file(report, output_path, class_names=None, genotype=None):
    """
    Creates an excel file with OA/AA/Kappa followed by one row per class, values x100.

    :type report: MetricsReport
    :param report: metrics to write

    :type output_path: Path | str
    :param output_path: path to the excel file to create

    :type class_names: [str]
    :param class_names: names of classes 1..K

    :type genotype: Genotype
    :param genotype: if given, a second sheet lists the network's block choices

    :rtype: Path
    :returns: path of the written file
    """
    output_path = _check_output_path(output_path, '.xlsx')

    workbook = xlsxwriter.Workbook(f'{output_path}')
    workbook.set_properties({'title': 'Classification report', 'created': _CREATED})
    bold = workbook.add_format({'bold': True})
    percent = workbook.add_format({'num_format': '0.00'})
    colored = workbook.add_format({'bg_color': '#E7E6E6', 'bold': True})

    worksheet = workbook.add_worksheet('Accuracy')
    worksheet.set_column(0, 0, 8)
    worksheet.set_column(1, 1, 24)
    worksheet.set_column(2, 3, 14)
    worksheet.write_row(0, 0, ['', 'Metric', 'Value (%)', 'Samples'], colored)
    worksheet.write_row(1, 1, ['OA'], bold)
    worksheet.write_number(1, 2, round(report.oa * 100, 2), percent)
    worksheet.write_number(1, 3, report.total)
    worksheet.write_row(2, 1, ['AA'], bold)
    worksheet.write_number(2, 2, round(report.aa * 100, 2), percent)
    worksheet.write_row(3, 1, ['Kappa'], bold)
    worksheet.write_number(3, 2, round(report.kappa * 100, 2), percent)

    row_sums = report.confusion.counts.sum(axis=1)
    worksheet.write_row(5, 0, ['Class', 'Name', 'Accuracy (%)', 'Samples'], colored)
    for k, recall in enumerate(report.per_class):
        row = 6 + k
        worksheet.write_number(row, 0, k + 1)
        worksheet.write(row, 1, class_names[k] if class_names else f'class{k + 1}')
        if not math.isnan(recall):
            worksheet.write_number(row, 2, round(recall * 100, 2), percent)
        else:
            worksheet.write(row, 2, 'n/a')
        worksheet.write_number(row, 3, int(row_sums[k]))

    if genotype is not None:
        sheet = workbook.add_worksheet('Genotype')
        sheet.set_column(0, 2, 16)
        sheet.write_row(0, 0, ['Block', 'Outer', 'Inner'], colored)
        for block, (outer, inner) in enumerate(genotype.choices):
            sheet.write_row(block + 1, 0, [block, outer.token, inner.token])
        occupancy = genotype.occupancy()
        sheet.write_row(len(genotype.choices) + 2, 0, ['Asymmetric pooling', round(occupancy['asymmetric'] * 100, 2)],
                        bold)

    workbook.close()
    return output_path
